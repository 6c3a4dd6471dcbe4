import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from binlift.config import RunConfig
from binlift.dataset import OPT_LEVELS, compile_and_strip
from binlift.deskcorpus import desk_bundles


@pytest.fixture(scope="session")
def run_config() -> RunConfig:
    config = RunConfig()
    config.validate()
    return config


@pytest.fixture(scope="session")
def corpus_bundles():
    return desk_bundles()


@pytest.fixture(scope="session")
def corpus_artifacts(tmp_path_factory, run_config, corpus_bundles):
    """Every desk bundle compiled at every (bitness, opt level), once per
    session: {(func_name, bitness, opt_level): CompiledBinary}."""
    root = tmp_path_factory.mktemp("corpus")
    jobs = [
        (bundle, bits, opt)
        for bundle in corpus_bundles
        for bits in bundle.bitness
        for opt in OPT_LEVELS
    ]

    def build(job):
        bundle, bits, opt = job
        workdir = root / f"{bundle.func_name}_{bits}_{opt}"
        return (bundle.func_name, bits, opt), compile_and_strip(
            bundle, opt, bits, run_config.toolchain, workdir
        )

    with ThreadPoolExecutor(max_workers=8) as pool:
        return dict(pool.map(build, jobs))


@pytest.fixture(scope="session")
def bundle_by_name(corpus_bundles):
    return {b.func_name: b for b in corpus_bundles}
