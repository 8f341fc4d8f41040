import pytest

from klift.corpus import LiftOptions, load_corpus, run_corpus
from klift.executor import default_shape, execute
from klift.kernel import parse_kernel
from klift.synth import SynthConfig, Synthesizer


@pytest.fixture(scope="session")
def corpus_entries():
    return load_corpus()


@pytest.fixture(scope="session")
def kernels(corpus_entries):
    """name -> (module, shape env, lift spec) for every corpus kernel."""
    out = {}
    for entry in corpus_entries:
        with open(entry.path, "r", encoding="utf-8") as fh:
            mod = parse_kernel(fh.read(), entry.name)
        env = default_shape(mod)
        out[entry.name] = (mod, env, execute(mod, env))
    return out


@pytest.fixture(scope="session")
def synth_results(kernels):
    """name -> SynthResult under the default configuration."""
    out = {}
    for name, (mod, env, spec) in kernels.items():
        out[name] = Synthesizer(spec, SynthConfig()).synthesize()
    return out


@pytest.fixture(scope="session")
def full_reports():
    """One full default-config corpus run shared by corpus and acceptance tests."""
    return run_corpus(LiftOptions())
