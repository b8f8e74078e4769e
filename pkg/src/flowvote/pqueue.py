"""Indexed binary min-heap with in-place key updates."""

from __future__ import annotations

from typing import Any, Hashable, Iterator


class IndexedMinHeap:
    """A min-heap of ``item -> key`` pairs supporting decrease/increase-key.

    Each item is stored once; ``heap[item] = key`` inserts or re-keys it and
    restores the heap property in O(log n). Keys must be mutually comparable
    (tuples work well for lexicographic tie-breaking).
    """

    def __init__(self, items: dict[Hashable, Any] | None = None):
        self._heap: list[list] = []  # [key, item]
        self._pos: dict[Hashable, int] = {}
        if items:
            for item, key in items.items():
                self._pos[item] = len(self._heap)
                self._heap.append([key, item])
            for pos in reversed(range(len(self._heap) // 2)):
                self._sift_down(pos)

    def __len__(self) -> int:
        return len(self._heap)

    def __contains__(self, item: Hashable) -> bool:
        return item in self._pos

    def __getitem__(self, item: Hashable) -> Any:
        return self._heap[self._pos[item]][0]

    def __setitem__(self, item: Hashable, key: Any) -> None:
        pos = self._pos.get(item)
        if pos is None:
            self._pos[item] = len(self._heap)
            self._heap.append([key, item])
            self._sift_up(len(self._heap) - 1)
            return
        old = self._heap[pos][0]
        self._heap[pos][0] = key
        if key < old:
            self._sift_up(pos)
        else:
            self._sift_down(pos)

    def __iter__(self) -> Iterator[tuple[Hashable, Any]]:
        """Destructively yield ``(item, key)`` in ascending key order."""
        while self._heap:
            yield self.pop()

    def peek(self) -> tuple[Hashable, Any]:
        if not self._heap:
            raise IndexError("peek from an empty heap")
        key, item = self._heap[0]
        return item, key

    def pop(self) -> tuple[Hashable, Any]:
        if not self._heap:
            raise IndexError("pop from an empty heap")
        key, item = self._heap[0]
        self._remove_at(0)
        return item, key

    def remove(self, item: Hashable) -> Any:
        pos = self._pos[item]
        key = self._heap[pos][0]
        self._remove_at(pos)
        return key

    def _remove_at(self, pos: int) -> None:
        heap = self._heap
        del self._pos[heap[pos][1]]
        last = heap.pop()
        if pos == len(heap):
            return
        heap[pos] = last
        self._pos[last[1]] = pos
        self._sift_up(pos)
        self._sift_down(self._pos[last[1]])

    def _sift_up(self, pos: int) -> None:
        heap, index = self._heap, self._pos
        entry = heap[pos]
        while pos > 0:
            parent = (pos - 1) // 2
            if not entry[0] < heap[parent][0]:
                break
            heap[pos] = heap[parent]
            index[heap[pos][1]] = pos
            pos = parent
        heap[pos] = entry
        index[entry[1]] = pos

    def _sift_down(self, pos: int) -> None:
        heap, index = self._heap, self._pos
        size = len(heap)
        entry = heap[pos]
        while True:
            child = 2 * pos + 1
            if child >= size:
                break
            right = child + 1
            if right < size and heap[right][0] < heap[child][0]:
                child = right
            if not heap[child][0] < entry[0]:
                break
            heap[pos] = heap[child]
            index[heap[pos][1]] = pos
            pos = child
        heap[pos] = entry
        index[entry[1]] = pos
