import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from flowvote import ingest
from flowvote.errors import (EmptyInput, InsufficientData, InvalidParameter, MissingIdentity,
                             ParseError, SchemaMismatch)
from flowvote.ingest import (ATTACK, BENIGN, PREDEFINED, FlowKey, downsample_attacks,
                             group_by_five_tuple, load_dataset, load_schema, max_attacks_for_rate,
                             split_train_test)

from helpers import nsl_table, unsw_line

UNSW = load_schema("unsw-nb15")
NSL = load_schema("nsl-kdd")


def write(tmp_path, lines, name="f.csv"):
    p = tmp_path / name
    p.write_text("\n".join(lines) + "\n")
    return p


# --- schemas and loading ---------------------------------------------------------

def test_builtin_schema_shapes():
    assert len(UNSW.names) == 49
    assert len(UNSW.value_columns) == 43
    assert UNSW.grouping and not NSL.grouping
    assert len(NSL.names) == 43


def test_unsw_row_has_key_and_43_values(tmp_path):
    t = load_dataset(write(tmp_path, [unsw_line(sport=5, dport=53, proto="udp", dpkts=7)]), UNSW)
    rec = t.record(0)
    assert rec.key == FlowKey("10.0.0.1", "10.0.0.2", 5, 53, "udp")
    assert len(rec.values) == 43
    assert rec.values["dpkts"] == 7.0
    assert rec.label == BENIGN and rec.dataset == "unsw-nb15"


def test_header_row_with_reordered_columns(tmp_path):
    names = UNSW.names
    line = unsw_line(dpkts=3).split(",")
    order = list(reversed(range(len(names))))
    p = write(tmp_path, [",".join(names[i] for i in order), ",".join(line[i] for i in order)])
    t = load_dataset(p, UNSW)
    assert len(t) == 1
    assert t.record(0).values["dpkts"] == 3.0


def test_multiple_files_concatenate_in_order(tmp_path):
    a = write(tmp_path, [unsw_line(sport=1)], "a.csv")
    b = write(tmp_path, [unsw_line(sport=2), unsw_line(sport=3)], "b.csv")
    t = load_dataset([a, b], UNSW)
    assert [r.key.src_port for r in t] == [1, 2, 3]
    assert [r.row for r in t] == [0, 1, 2]


def test_hex_port_and_na_tokens(tmp_path):
    t = load_dataset(write(tmp_path, [unsw_line(sport="0x000b", sload="-")]), UNSW)
    assert t.record(0).key.src_port == 11
    assert t.record(0).values["sload"] == 0.0


def test_empty_file(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    with pytest.raises(EmptyInput):
        load_dataset(p, UNSW)


def test_header_only_file_is_empty(tmp_path):
    with pytest.raises(EmptyInput):
        load_dataset(write(tmp_path, [",".join(UNSW.names)]), UNSW)


def test_missing_column_in_header(tmp_path):
    names = UNSW.names[:-1]
    line = unsw_line().split(",")[:-1]
    with pytest.raises(SchemaMismatch):
        load_dataset(write(tmp_path, [",".join(names), ",".join(line)]), UNSW)


def test_extra_column(tmp_path):
    with pytest.raises(SchemaMismatch):
        load_dataset(write(tmp_path, [unsw_line() + ",7"]), UNSW)


def test_short_row(tmp_path):
    short = ",".join(unsw_line().split(",")[:-3])
    with pytest.raises(SchemaMismatch):
        load_dataset(write(tmp_path, [unsw_line(), short]), UNSW)


def test_unparseable_number_reports_row_and_column(tmp_path):
    p = write(tmp_path, [unsw_line(), unsw_line(dpkts="lots")])
    with pytest.raises(ParseError) as info:
        load_dataset(p, UNSW)
    assert info.value.row == 2 and info.value.column == "dpkts"


def test_blank_label_is_parse_error(tmp_path):
    line = unsw_line().rsplit(",", 1)[0] + ","
    with pytest.raises(ParseError):
        load_dataset(write(tmp_path, [line]), UNSW)


def test_nsl_first_row_normal_is_benign(tmp_path):
    # First data row of the published KDDTrain+ file.
    row = ("0,tcp,ftp_data,SF,491,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,2,2,0.00,0.00,0.00,0.00,1.00,"
           "0.00,0.00,150,25,0.17,0.03,0.17,0.00,0.00,0.00,0.05,0.00,normal,20")
    attack = row.replace("normal", "neptune")
    t = load_dataset(write(tmp_path, [row, attack]), NSL)
    first, second = t.record(0), t.record(1)
    assert first.label == BENIGN and first.key is None
    assert first.values["src_bytes"] == 491.0
    assert second.label == ATTACK and second.category == "neptune"
    assert t.attack_rate == 0.5


def test_nsl_flag_tokens_decode(tmp_path):
    base = ["0"] * 43
    base[1], base[2], base[3] = "tcp", "http", "SF"
    base[NSL.names.index("label")] = "normal"
    base[NSL.names.index("logged_in")] = "yes"
    t = load_dataset(write(tmp_path, [",".join(base)]), NSL)
    assert t.record(0).values["logged_in"] == 1.0
    base[NSL.names.index("logged_in")] = "maybe"
    with pytest.raises(ParseError):
        load_dataset(write(tmp_path, [",".join(base)], "g.csv"), NSL)


def test_port_out_of_range(tmp_path):
    with pytest.raises(ParseError):
        load_dataset(write(tmp_path, [unsw_line(dport=70000)]), UNSW)
    with pytest.raises(InvalidParameter):
        FlowKey("a", "b", -1, 80, "tcp")


def test_empty_table_attack_rate_is_zero():
    assert nsl_table(0).attack_rate == 0.0


# --- grouping -------------------------------------------------------------------

def test_grouping_shared_key_and_protocol(tmp_path):
    lines = [unsw_line(), unsw_line(dpkts=5), unsw_line(proto="udp")]
    groups = group_by_five_tuple(load_dataset(write(tmp_path, lines), UNSW))
    assert [len(g) for _, g in groups] == [2, 1]
    assert groups[0][1][1].values["dpkts"] == 5.0
    assert groups[1][0].protocol == "udp"


def test_grouping_empty_and_missing_identity():
    t = nsl_table(3)
    with pytest.raises(MissingIdentity):
        group_by_five_tuple(t)


def test_grouping_is_partition(unsw_table):
    groups = ingest.group_positions(unsw_table)
    allpos = np.sort(np.concatenate(groups))
    assert np.array_equal(allpos, np.arange(len(unsw_table)))
    assert len(groups) <= len(unsw_table)
    for pos in groups:
        assert np.all(np.diff(pos) > 0)  # within-group order kept


# --- downsampling ---------------------------------------------------------------

def test_downsample_from_46_percent():
    n = 10_000
    attack = np.zeros(n, dtype=bool)
    attack[:4600] = True
    out = downsample_attacks(nsl_table(n, attack), 0.034, seed=3)
    assert 0.033 <= out.attack_rate <= 0.034
    assert len(out) - out.n_attacks == 5400


def test_downsample_below_target_unchanged():
    attack = np.zeros(100, dtype=bool)
    attack[0] = True
    t = nsl_table(100, attack)
    assert downsample_attacks(t, 0.034, seed=0) is t


def test_downsample_deterministic_and_range_checked():
    attack = np.arange(500) % 2 == 0
    t = nsl_table(500, attack)
    a = downsample_attacks(t, 0.1, seed=9)
    b = downsample_attacks(t, 0.1, seed=9)
    assert a.frame.equals(b.frame)
    for bad in (0, 1, -0.1, 1.5):
        with pytest.raises(InvalidParameter):
            downsample_attacks(t, bad, seed=0)


@given(n_benign=st.integers(0, 400), n_attack=st.integers(0, 400),
       rate=st.floats(0.001, 0.999), seed=st.integers(0, 2**31))
def test_downsample_invariants(n_benign, n_attack, rate, seed):
    attack = np.r_[np.zeros(n_benign, bool), np.ones(n_attack, bool)]
    t = nsl_table(n_benign + n_attack, attack)
    out = downsample_attacks(t, rate, seed)
    rows = set(out.frame["_row"])
    assert set(range(n_benign)) <= rows  # benign untouched
    assert rows <= set(range(len(t)))
    k = out.n_attacks
    assert k == min(n_attack, max_attacks_for_rate(n_benign, rate))
    if k < n_attack:
        assert k <= rate * (n_benign + k) + 1e-9
        assert k + 1 > rate * (n_benign + k + 1) - 1e-9


def test_max_attacks_exact_boundary():
    # 0.034 * 966 / 0.966 is exactly 34 in rational arithmetic.
    assert max_attacks_for_rate(966, 0.034) == 34


# --- splitting ------------------------------------------------------------------

def test_split_four_rows():
    train, test = split_train_test(nsl_table(4), seed=0, sample_size=4, train_fraction=0.75)
    assert (len(train), len(test)) == (3, 1)


def test_split_full_scale_sizes():
    t = nsl_table(160_000)
    train, test = split_train_test(t, seed=1, sample_size=150_000, train_fraction=0.75)
    assert (len(train), len(test)) == (112_500, 37_500)


@given(n=st.integers(2, 300), frac=st.floats(0.05, 0.95), seed=st.integers(0, 2**31), data=st.data())
def test_split_properties(n, frac, seed, data):
    size = data.draw(st.integers(1, n))
    t = nsl_table(n)
    train, test = split_train_test(t, seed=seed, sample_size=size, train_fraction=frac)
    tr, te = list(train.frame["_row"]), list(test.frame["_row"])
    # floor of the fraction as written in decimal, not of its binary float product
    assert len(tr) == math.floor(Decimal(repr(frac)) * size)
    assert not set(tr) & set(te)
    assert len(tr) + len(te) == size
    again = split_train_test(t, seed=seed, sample_size=size, train_fraction=frac)
    assert list(again[0].frame["_row"]) == tr and list(again[1].frame["_row"]) == te


def test_split_errors_and_predefined():
    t = nsl_table(10)
    with pytest.raises(InsufficientData):
        split_train_test(t, seed=0, sample_size=11)
    other = nsl_table(3)
    assert split_train_test(t, PREDEFINED, test=other) == (t, other)
    with pytest.raises(InvalidParameter):
        split_train_test(t, PREDEFINED)
    with pytest.raises(InvalidParameter):
        split_train_test(t, "shuffle")


# --- persistence -----------------------------------------------------------------

def test_table_round_trip(tmp_path, unsw_table):
    p = tmp_path / "t.json"
    ingest.save_table(unsw_table, p)
    back = ingest.load_table(p)
    assert len(back) == len(unsw_table)
    assert back.label_counts() == unsw_table.label_counts()
    assert back.record(5) == unsw_table.record(5)


def test_table_bad_files(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ingest.DeserializationError):
        ingest.load_table(p)
    p.write_text('{"format": "flowvote.flow-table", "version": 99}')
    with pytest.raises(ingest.IncompatibleModel):
        ingest.load_table(p)
