import pytest

from esa.kg import load_dataset_dir
from esa.synthetic import make_benchmark


@pytest.fixture(scope="session")
def small_bench_dir(tmp_path_factory):
    """A 36-entity corpus with the full benchmark layout, for fast tests."""
    root = tmp_path_factory.mktemp("bench_small")
    make_benchmark(root, n_dbpedia=24, n_lmdb=12, seed=7)
    return root


@pytest.fixture(scope="session")
def small_dataset(small_bench_dir):
    return load_dataset_dir(small_bench_dir)


@pytest.fixture(scope="session")
def full_bench_dir(tmp_path_factory):
    """The full-size stand-in: 175 entities, 125 dbpedia + 50 lmdb."""
    root = tmp_path_factory.mktemp("bench_full")
    make_benchmark(root, seed=2024)
    return root


@pytest.fixture(scope="session")
def full_dataset(full_bench_dir):
    return load_dataset_dir(full_bench_dir)
