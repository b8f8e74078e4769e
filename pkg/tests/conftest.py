import os

import numpy as np
import pytest
from hypothesis import settings

from flowvote import synthetic
from flowvote.ingest import load_dataset, load_schema

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def unsw_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "unsw.csv"
    synthetic.write_unsw_csv(path, 3000, seed=11)
    return path


@pytest.fixture(scope="session")
def nsl_csvs(tmp_path_factory):
    d = tmp_path_factory.mktemp("nsl")
    train, test = d / "train.csv", d / "test.csv"
    synthetic.write_nsl_csv(train, 3000, seed=21)
    synthetic.write_nsl_csv(test, 1500, seed=22)
    return train, test


@pytest.fixture(scope="session")
def unsw_table(unsw_csv):
    return load_dataset(unsw_csv, load_schema("unsw-nb15"))


@pytest.fixture(scope="session")
def nsl_table(nsl_csvs):
    return load_dataset(nsl_csvs[0], load_schema("nsl-kdd"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
