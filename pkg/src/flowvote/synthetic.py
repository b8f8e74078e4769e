"""Synthetic CSVs in the UNSW-NB15 and NSL-KDD column layouts.

The real datasets are large downloads; these generators give the CLI and
the test-suite something with the right shape. Attack rows differ from
benign rows on the detector features (high TTL, tight packet spacing,
SYN-flood style error rates, ...), so the numbers they yield say nothing
about performance on the real data.
"""

from __future__ import annotations

import csv
import os

import numpy as np

from .ingest import load_schema

_UNSW_ATTACKS = ("Exploits", "Generic", "Fuzzers", "DoS", "Reconnaissance", "Backdoor")
_NSL_ATTACKS = ("neptune", "smurf", "satan", "portsweep", "ipsweep", "back")


def _rng(seed: int, stream: int) -> np.random.Generator:
    # Own stream: a bare default_rng(seed) would replay the trial sampler's draws
    # for equal seeds and correlate attack placement with the train/test split.
    return np.random.default_rng([seed, stream])


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def unsw_rows(n_rows: int, attack_rate: float = 0.034, seed: int = 0) -> list[list[str]]:
    rng = _rng(seed, 15)
    names = load_schema("unsw-nb15").names
    n_attack = int(round(attack_rate * n_rows))
    is_attack = np.zeros(n_rows, dtype=bool)
    is_attack[rng.choice(n_rows, n_attack, replace=False)] = True
    rows = []
    # Benign conversations repeat their five-tuple a few times.
    last_key = None
    for k in range(n_rows):
        atk = bool(is_attack[k])
        if not atk and last_key is not None and rng.random() < 0.3:
            srcip, sport, dstip, dsport, proto = last_key
        else:
            srcip = f"{'175.45.176' if atk else '59.166.0'}.{rng.integers(0, 10)}"
            dstip = f"149.171.126.{rng.integers(0, 20)}"
            sport = int(rng.integers(1024, 65536))
            proto = "tcp" if (atk or rng.random() < 0.85) else "udp"
            dsport = int(rng.choice([80, 443, 21, 25, 111]) if proto == "tcp" else 53)
        if not atk:
            last_key = (srcip, sport, dstip, dsport, proto)
        rec = dict.fromkeys(names, 0)
        rec.update(srcip=srcip, sport=sport, dstip=dstip, dsport=dsport, proto=proto)
        tcp = proto == "tcp"
        if atk:
            # Spread over orders of magnitude: attacks are rare and unlike each other.
            dur = 10 ** rng.uniform(-4, 0)
            spkts = int(10 ** rng.uniform(0.5, 3))
            dpkts = int(10 ** rng.uniform(1, 3.3))
            rec.update(sttl=int(rng.choice([254, 255, 60, 200])), dttl=252,
                       sloss=int(10 ** rng.uniform(0, 2)), dloss=int(10 ** rng.uniform(0, 2.5)),
                       sintpkt=10 ** rng.uniform(-3, 0), dintpkt=10 ** rng.uniform(-3, 0),
                       synack=10 ** rng.uniform(-6, -4), ackdat=10 ** rng.uniform(-6, -4),
                       attack_cat=str(rng.choice(_UNSW_ATTACKS)), label=1)
        else:
            dur = rng.exponential(2.0) + 0.05
            spkts = int(rng.poisson(10)) + 1
            dpkts = int(rng.poisson(12))
            rec.update(sttl=int(rng.choice([31, 62])), dttl=int(rng.choice([29, 252])),
                       sloss=int(rng.poisson(0.3)), dloss=int(rng.poisson(0.3)),
                       sintpkt=rng.gamma(2.0, 40.0), dintpkt=rng.gamma(2.0, 40.0),
                       synack=rng.gamma(2.0, 0.01) if tcp else 0.0,
                       ackdat=rng.gamma(2.0, 0.01) if tcp else 0.0,
                       attack_cat="", label=0)
        sbytes = spkts * int(rng.integers(60, 1500))
        dbytes = dpkts * int(rng.integers(60, 1500))
        rec.update(dur=dur, spkts=spkts, dpkts=dpkts, sbytes=sbytes, dbytes=dbytes,
                   state="FIN" if tcp else "CON", service="-" if not tcp else "http",
                   sload=8 * sbytes / dur, dload=8 * dbytes / dur,
                   smeansz=sbytes // spkts, dmeansz=dbytes // max(dpkts, 1),
                   tcprtt=rec["synack"] + rec["ackdat"], stime=1421927414 + k, ltime=1421927414 + k)
        rows.append([_fmt(rec[n]) for n in names])
    return rows


def nsl_rows(n_rows: int, attack_rate: float = 0.46, seed: int = 0) -> list[list[str]]:
    rng = _rng(seed, 99)
    names = load_schema("nsl-kdd").names
    rows = []
    for _ in range(n_rows):
        atk = rng.random() < attack_rate
        rec = dict.fromkeys(names, 0)
        if atk:
            rec.update(protocol_type="tcp", service=str(rng.choice(["private", "http", "other"])),
                       flag="S0", src_bytes=0, dst_bytes=0, logged_in=0,
                       count=int(rng.integers(100, 511)), srv_count=int(rng.integers(1, 30)),
                       serror_rate=1.0, srv_serror_rate=1.0, same_srv_rate=rng.uniform(0.0, 0.1),
                       diff_srv_rate=rng.uniform(0.05, 0.1), dst_host_count=255,
                       dst_host_srv_count=int(rng.integers(1, 30)),
                       dst_host_same_srv_rate=rng.uniform(0.0, 0.1),
                       dst_host_diff_srv_rate=rng.uniform(0.05, 0.1),
                       dst_host_serror_rate=1.0, dst_host_srv_serror_rate=1.0,
                       label=str(rng.choice(_NSL_ATTACKS)))
        else:
            rec.update(protocol_type=str(rng.choice(["tcp", "udp", "icmp"], p=[0.8, 0.15, 0.05])),
                       service=str(rng.choice(["http", "smtp", "ftp_data", "domain_u"])),
                       flag="SF", src_bytes=int(rng.lognormal(5.5, 1.0)),
                       dst_bytes=int(rng.lognormal(7.0, 1.5)), logged_in=int(rng.random() < 0.7),
                       count=int(rng.integers(1, 20)), srv_count=int(rng.integers(1, 30)),
                       serror_rate=0.0, srv_serror_rate=0.0, same_srv_rate=rng.uniform(0.9, 1.0),
                       diff_srv_rate=rng.uniform(0.0, 0.05), dst_host_count=int(rng.integers(1, 256)),
                       dst_host_srv_count=int(rng.integers(100, 256)),
                       dst_host_same_srv_rate=rng.uniform(0.8, 1.0),
                       dst_host_diff_srv_rate=rng.uniform(0.0, 0.05),
                       dst_host_serror_rate=rng.uniform(0.0, 0.02), dst_host_srv_serror_rate=0.0,
                       label="normal")
        rec["difficulty"] = int(rng.integers(1, 22))
        rows.append([_fmt(rec[n]) for n in names])
    return rows


def write_csv(path: str | os.PathLike, rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def write_unsw_csv(path, n_rows: int, attack_rate: float = 0.034, seed: int = 0) -> None:
    write_csv(path, unsw_rows(n_rows, attack_rate, seed))


def write_nsl_csv(path, n_rows: int, attack_rate: float = 0.46, seed: int = 0) -> None:
    write_csv(path, nsl_rows(n_rows, attack_rate, seed))
