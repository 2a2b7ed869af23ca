import hashlib

import pytest

from xlser.corpus import read_manifest
from xlser.errors import ConfigError
from xlser.synth import DEFAULT_LANGUAGES, LanguageSpec, SynthSpec, synth_corpus

SMALL = SynthSpec(speakers=3, clips_per_speaker=4, min_seconds=0.3, max_seconds=0.6)


def _digest(root):
    h = hashlib.sha256()
    for p in sorted(root.rglob("*.wav")):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def test_counts_and_balance(tmp_path):
    ms = synth_corpus(SMALL, 3, tmp_path)
    assert sorted(ms) == ["ASED", "EMODB", "RAVDESS", "URDU"]
    for m in ms.values():
        assert len(m) == 12 and len(m.speakers) == 3
        assert m.counts == {"Positive": 6, "Negative": 6}
        assert all(0.3 <= e.duration_s <= 0.6 for e in m.entries)
    assert read_manifest(tmp_path / "ASED.csv") == ms["ASED"]


def test_same_seed_same_bytes(tmp_path):
    synth_corpus(SMALL, 5, tmp_path / "a")
    synth_corpus(SMALL, 5, tmp_path / "b")
    synth_corpus(SMALL, 6, tmp_path / "c")
    assert _digest(tmp_path / "a") == _digest(tmp_path / "b")
    assert _digest(tmp_path / "a") != _digest(tmp_path / "c")


def test_sentences_available_for_sentence_splits(tmp_path):
    spec = SynthSpec(languages=DEFAULT_LANGUAGES[:1], speakers=2, clips_per_speaker=20,
                     min_seconds=0.2, max_seconds=0.2)
    (m,) = synth_corpus(spec, 0, tmp_path).values()
    assert len(m.sentences) == 10


def test_spec_from_dict_names_field():
    with pytest.raises(ConfigError, match="speakerz"):
        SynthSpec.from_dict({"speakerz": 3})
    with pytest.raises(ConfigError, match=r"languages\[0\]"):
        SynthSpec.from_dict({"languages": [{"corpus": "ASED", "f0": 100, "pitch": 1}]})
    with pytest.raises(ConfigError, match="positive"):
        SynthSpec.from_dict({"positive": {"am_rat": 1}})
    assert SynthSpec.from_dict({"negative": {"am_rate": 9.0}}).negative.am_depth == 0.8
    spec = SynthSpec.from_dict({"speakers": 4, "languages": [
        {"corpus": "URDU", "f0": 180, "harmonics": [1, 0.5]}]})
    assert spec.speakers == 4 and spec.languages == (LanguageSpec("URDU", 180, (1, 0.5)),)


@pytest.mark.parametrize("kw", [{"speakers": 0}, {"clips_per_speaker": 0}, {"languages": ()},
                                {"min_seconds": 3.0, "max_seconds": 2.0}, {"sample_rate": 4000},
                                {"languages": DEFAULT_LANGUAGES[:1] * 2}])
def test_spec_validation(kw):
    with pytest.raises(ConfigError):
        SynthSpec(**kw).validate()
