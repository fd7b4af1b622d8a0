"""Estimator API contract: params round trip, clone, fit/predict/score."""

import numpy as np
import pytest
from PIL import Image
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from inkline.estimators import ContrastivePretrainer, LineTranscriber
from inkline.exceptions import ValidationError

TINY = dict(
    channels=(2, 3, 4), hidden=4, lstm_layers=1, d_s=4,
    ratio_lo=0.1, batch_size=2, seed=0,
)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("est")
    rng = np.random.default_rng(0)
    paths, texts = [], ["abca", "bac", "ccab", "ba"]
    for i in range(4):
        pix = (rng.random((96, 120)) < 0.25).astype(np.uint8)
        p = root / f"l{i}.png"
        Image.fromarray(((1 - pix) * 255).astype(np.uint8), "L").save(p)
        paths.append(str(p))
    return paths, texts


class TestSklearnContract:
    def test_get_set_params_round_trip(self):
        est = ContrastivePretrainer(hidden=8, mask_len=6)
        params = est.get_params()
        assert params["hidden"] == 8
        assert params["mask_len"] == 6
        est.set_params(hidden=16)
        assert est.hidden == 16

    def test_clone_preserves_params(self):
        est = LineTranscriber(init="scratch", hidden=8, max_epochs=5)
        twin = clone(est)
        assert twin.get_params() == est.get_params()

    def test_unfitted_raises(self, corpus):
        paths, _ = corpus
        with pytest.raises(NotFittedError):
            ContrastivePretrainer().transform(paths[:1])
        with pytest.raises(NotFittedError):
            LineTranscriber().predict(paths[:1])

    def test_invalid_hyperparams_surface_at_fit(self, corpus):
        paths, _ = corpus
        est = ContrastivePretrainer(mask_coverage=2.0, **{k: v for k, v in TINY.items()})
        with pytest.raises(ValidationError, match="mask_coverage"):
            est.fit(paths)


class TestPretrainer:
    def test_fit_transform_shapes(self, corpus, tmp_path):
        paths, _ = corpus
        est = ContrastivePretrainer(
            mask_len=6, mask_gap=4, n_foils=5, pretrain_epochs=1,
            workdir=str(tmp_path), **TINY,
        )
        est.fit(paths)
        assert est.checkpoint_path_.exists()
        reps = est.transform(paths[:2])
        assert len(reps) == 2
        # width 120 gives 13 steps; d_c is twice the hidden size
        assert reps[0].shape == (13, 8)
        assert np.isfinite(reps[0]).all()

    def test_missing_image_named(self):
        est = ContrastivePretrainer(**TINY)
        with pytest.raises(ValidationError, match="ghost.png"):
            est.fit(["ghost.png"])


class TestTranscriber:
    def test_fit_predict_score(self, corpus, tmp_path):
        paths, texts = corpus
        est = LineTranscriber(
            init="scratch", max_epochs=2, freeze_epochs=1, probe_every=1,
            workdir=str(tmp_path), **TINY,
        )
        est.fit(paths, texts)
        assert est.checkpoint_path_.exists()
        assert est.vocab_.symbols[0] == ""
        hyps = est.predict(paths)
        assert len(hyps) == 4
        assert all(isinstance(h, str) for h in hyps)
        s = est.score(paths, texts)
        assert s <= 1.0

    def test_pipeline_handoff(self, corpus, tmp_path):
        # Pretrain, then warm-start the transcriber from that checkpoint.
        paths, texts = corpus
        pre = ContrastivePretrainer(
            mask_len=6, mask_gap=4, n_foils=5, pretrain_epochs=1,
            workdir=str(tmp_path / "pre"), **TINY,
        )
        pre.fit(paths)
        est = LineTranscriber(
            init=str(pre.checkpoint_path_), max_epochs=2, freeze_epochs=1,
            workdir=str(tmp_path / "ft"), **TINY,
        )
        est.fit(paths, texts)
        assert est.predict(paths[:1])[0] is not None

    def test_mismatched_lengths_rejected(self, corpus):
        paths, texts = corpus
        est = LineTranscriber(init="scratch", **TINY)
        with pytest.raises(ValidationError, match="transcripts"):
            est.fit(paths, texts[:-1])
