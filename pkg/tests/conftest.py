from pathlib import Path

import numpy as np
import pytest

from tamperqa.fixtures import make_corpus
from tamperqa.pipeline import RunConfig, generate


@pytest.fixture(scope="session")
def corpus_dir(tmp_path_factory) -> Path:
    return make_corpus(tmp_path_factory.mktemp("corpus"), n_images=6, instances_per_image=5, seed=3)


def _generate(tmp_path_factory, corpus_dir, kind):
    out = tmp_path_factory.mktemp(f"ds_{kind}")
    generate(RunConfig(corpus_root=str(corpus_dir), out_root=str(out), dataset_kind=kind, global_seed=11, workers=1))
    return out


@pytest.fixture(scope="session")
def cmqa_dir(tmp_path_factory, corpus_dir) -> Path:
    return _generate(tmp_path_factory, corpus_dir, "cmqa")


@pytest.fixture(scope="session")
def tqa_dir(tmp_path_factory, corpus_dir) -> Path:
    return _generate(tmp_path_factory, corpus_dir, "tqa")


@pytest.fixture
def textured():
    rng = np.random.default_rng(5)
    return rng.integers(0, 256, size=(128, 128, 3), dtype=np.uint8)


def square_mask(shape, x0, y0, w, h):
    m = np.zeros(shape, dtype=bool)
    m[y0 : y0 + h, x0 : x0 + w] = True
    return m


@pytest.fixture(scope="session")
def small_tqa_dir(tmp_path_factory) -> Path:
    corpus = make_corpus(tmp_path_factory.mktemp("small_corpus"), n_images=3, instances_per_image=4, seed=3)
    out = tmp_path_factory.mktemp("small_tqa")
    generate(RunConfig(corpus_root=str(corpus), out_root=str(out), dataset_kind="tqa", global_seed=11, workers=1))
    return out
