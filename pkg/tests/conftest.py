import pytest

from xlser.synth import SynthSpec, synth_corpus

SMALL_SPEC = SynthSpec(speakers=4, clips_per_speaker=6, min_seconds=0.4, max_seconds=0.8)


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Four tiny pseudo-language trees (4 speakers x 6 clips) with manifests."""
    root = tmp_path_factory.mktemp("small")
    synth_corpus(SMALL_SPEC, 1, root)
    return root


@pytest.fixture(scope="session")
def full_corpus(tmp_path_factory):
    """The default synthetic corpora (10 speakers x 10 clips x 2 valences each)."""
    root = tmp_path_factory.mktemp("full")
    synth_corpus(SynthSpec(), 7, root)
    return root

