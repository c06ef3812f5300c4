import numpy as np
import pytest
import torch
from torch import nn

from helpers import assert_grads_match
from sarcgen.behavior_gan import BehaviorNorms
from sarcgen.corpus import Label, build_vocab, split_dataset
from sarcgen.detector import (
    USER_FEATURE_DIM,
    Detector,
    DetectorConfig,
    FusionModel,
    ScratchTextEncoder,
    build_text_encoder,
    detector_tensors,
    fuse_and_classify,
    load_text_encoder,
    save_text_encoder,
    train_detector,
    user_feature_vector,
)
from sarcgen.errors import ConfigError, DataError
from sarcgen.toydata import separable_records

FIXTURE = separable_records(600, seed=0)
VOCAB = build_vocab(FIXTURE, min_freq=1)


def fast_config(**kw):
    kw.setdefault("d", 32)
    kw.setdefault("m", 16)
    kw.setdefault("t_max", 16)
    kw.setdefault("lr", 1e-2)
    kw.setdefault("epochs", 20)
    kw.setdefault("seed", 0)
    return DetectorConfig(**kw)


def trained_fixture_detector(records=None, **kw):
    records = records or FIXTURE
    train, val, test = split_dataset(records, (0.6, 0.2, 0.2), seed=1)
    det, history = train_detector(train, val, VOCAB, fast_config(**kw))
    return det, history, test


class TestEncoder:
    def test_eval_mode_deterministic(self):
        torch.manual_seed(0)
        enc = ScratchTextEncoder(len(VOCAB), d=32, layers=2, heads=2, t_max=16)
        enc.eval()
        ids, mask, _, _ = detector_tensors(
            FIXTURE[:4], VOCAB, BehaviorNorms(0, 1, 0, 1), 16
        )
        with torch.no_grad():
            a = enc(ids, mask)
            b = enc(ids, mask)
        assert torch.equal(a, b)

    def test_padding_invariance(self):
        torch.manual_seed(1)
        enc = ScratchTextEncoder(len(VOCAB), d=32, layers=2, heads=2, t_max=48)
        enc.eval()
        norms = BehaviorNorms(0, 1, 0, 1)
        ids16, mask16, _, _ = detector_tensors(FIXTURE[:6], VOCAB, norms, 16)
        ids32, mask32, _, _ = detector_tensors(FIXTURE[:6], VOCAB, norms, 32)
        with torch.no_grad():
            h16 = enc(ids16, mask16)
            h32 = enc(ids32, mask32)
        assert (h16 - h32).abs().max().item() < 1e-5

    def test_width_matches_config_both_modes(self, tmp_path):
        cfg = fast_config()
        enc = build_text_encoder(cfg, len(VOCAB))
        assert enc.d == cfg.d
        save_text_encoder(enc, tmp_path / "encoder.pt")
        cfg2 = fast_config(encoder="pretrained_checkpoint",
                           encoder_checkpoint=str(tmp_path / "encoder.pt"))
        loaded = build_text_encoder(cfg2, len(VOCAB))
        assert loaded.d == cfg.d
        ids, mask, _, _ = detector_tensors(FIXTURE[:3], VOCAB, BehaviorNorms(0, 1, 0, 1), 16)
        with torch.no_grad():
            assert torch.allclose(enc(ids, mask), loaded(ids, mask))

    def test_checkpoint_mode_requires_path(self):
        with pytest.raises(ConfigError, match="encoder_checkpoint"):
            DetectorConfig(encoder="pretrained_checkpoint").validate()


class TestUserEmbedding:
    def test_zero_params_give_zero(self):
        torch.manual_seed(0)
        model = FusionModel(ScratchTextEncoder(8, d=16, t_max=8), m=8)
        for lin in model.user_mlp:
            nn.init.zeros_(lin.weight)
            nn.init.zeros_(lin.bias)
        u = model.embed_user(torch.randn(4, USER_FEATURE_DIM))
        assert torch.equal(u, torch.zeros(4, 8))

    def test_negative_bias_clamped(self):
        torch.manual_seed(0)
        model = FusionModel(ScratchTextEncoder(8, d=16, t_max=8), m=8)
        for lin in model.user_mlp:
            nn.init.zeros_(lin.weight)
            nn.init.constant_(lin.bias, -2.0)
        u = model.embed_user(torch.randn(4, USER_FEATURE_DIM))
        assert torch.equal(u, torch.zeros(4, 8))

    def test_single_layer_matches_matmul_oracle(self):
        torch.manual_seed(3)
        model = FusionModel(ScratchTextEncoder(8, d=16, t_max=8), m=8)
        x = torch.randn(5, USER_FEATURE_DIM)
        lin = model.user_mlp[0]
        oracle = torch.clamp(x @ lin.weight.T.detach() + lin.bias.detach(), min=0)
        assert torch.allclose(model.embed_user(x), oracle, atol=1e-6)

    def test_width_mismatch_rejected(self):
        torch.manual_seed(0)
        model = FusionModel(ScratchTextEncoder(8, d=16, t_max=8), m=8)
        with pytest.raises(RuntimeError):
            model.embed_user(torch.randn(2, USER_FEATURE_DIM + 1))


class TestFusion:
    @staticmethod
    def model():
        torch.manual_seed(4)
        return FusionModel(ScratchTextEncoder(8, d=16, t_max=8), m=8)

    def test_zero_head_gives_half(self):
        model = self.model()
        nn.init.zeros_(model.head.weight)
        nn.init.zeros_(model.head.bias)
        y = fuse_and_classify(model, torch.randn(3, 16), torch.randn(3, 8))
        assert torch.equal(y, torch.full((3,), 0.5))

    def test_large_bias_saturates(self):
        model = self.model()
        nn.init.zeros_(model.head.weight)
        nn.init.constant_(model.head.bias, 20.0)
        y = fuse_and_classify(model, torch.randn(3, 16), torch.randn(3, 8))
        assert (y > 0.9999).all()

    def test_logit_matches_dot_product_oracle(self):
        model = self.model()
        h, u = torch.randn(2, 16), torch.randn(2, 8)
        w = model.head.weight.detach()[0]
        b = model.head.bias.detach()[0]
        combined = torch.cat([h, u], dim=1)
        oracle = torch.sigmoid(combined @ w + b)
        assert torch.allclose(fuse_and_classify(model, h, u), oracle, atol=1e-6)

    def test_probability_strictly_inside_unit_interval(self):
        model = self.model()
        y = fuse_and_classify(model, torch.randn(64, 16) * 10, torch.randn(64, 8) * 10)
        assert ((y > 0) & (y < 1)).all()


class TestUserFeatureVector:
    def test_layout_and_ranges(self):
        rec = FIXTURE[0]
        norms = BehaviorNorms.fit(FIXTURE)
        x = user_feature_vector(rec, norms)
        assert x.shape == (USER_FEATURE_DIM,)
        assert x[:5].sum() == 1.0 and x[5:7].sum() == 1.0
        assert x[13] == rec.behavior.sarcasm_rate
        assert ((x >= 0.0) & (x <= 1.0)).all()

    def test_missing_behavior_directs_to_synthesize(self):
        rec = FIXTURE[0]
        bare = type(rec)(id="x", text="t", label=rec.label, topic=rec.topic,
                         hierarchy=rec.hierarchy)
        with pytest.raises(DataError, match="synthesize_behaviors"):
            user_feature_vector(bare, BehaviorNorms(0, 1, 0, 1))


class TestTraining:
    def test_separable_fixture_reaches_high_f1(self):
        det, history, test = trained_fixture_detector()
        best_val = max(h.val.sarcastic.f1 for h in history)
        assert best_val >= 0.99
        assert len(history) <= 20
        assert det.evaluate(test).sarcastic.f1 >= 0.95

    def test_label_inversion_symmetry(self):
        from dataclasses import replace

        flipped = [
            replace(
                r,
                label=Label.NON_SARCASTIC if r.label is Label.SARCASTIC else Label.SARCASTIC,
            )
            for r in FIXTURE
        ]
        _, history, _ = trained_fixture_detector(records=flipped)
        assert max(h.val.sarcastic.f1 for h in history) >= 0.99

    def test_patience_zero_stops_one_epoch_beyond_best(self):
        _, history, _ = trained_fixture_detector(patience=0, epochs=20)
        f1s = [h.val.sarcastic.f1 for h in history]
        best_epoch = f1s.index(max(f1s))
        assert len(history) == best_epoch + 2 or (
            len(history) == 20 and best_epoch == len(history) - 1
        )

    def test_deterministic_under_seed(self):
        _, h1, _ = trained_fixture_detector(epochs=3, patience=5)
        _, h2, _ = trained_fixture_detector(epochs=3, patience=5)
        assert [e.train_loss for e in h1] == [e.train_loss for e in h2]

    def test_missing_behavior_blocks_error(self):
        from dataclasses import replace

        bare = [replace(r, behavior=None) for r in FIXTURE[:100]]
        with pytest.raises(DataError, match="synthesize_behaviors"):
            train_detector(bare, bare[:20], VOCAB, fast_config(epochs=1))

    def test_bce_gradients_match_finite_differences(self):
        import torch.nn.functional as F

        torch.manual_seed(5)
        enc = ScratchTextEncoder(len(VOCAB), d=8, layers=1, heads=1, t_max=12).double()
        model = FusionModel(enc, m=4).double()
        norms = BehaviorNorms.fit(FIXTURE)
        ids, mask, x, y = detector_tensors(FIXTURE[:3], VOCAB, norms, 12)
        x = x.double()
        y = y.double()
        fusion_params = [model.head.weight, model.head.bias] + [
            p for lin in model.user_mlp for p in lin.parameters()
        ]

        def loss():
            return F.binary_cross_entropy(model(ids, mask, x), y)

        assert_grads_match(loss, fusion_params)


class TestPredict:
    def test_tie_breaks_sarcastic(self):
        torch.manual_seed(0)
        enc = ScratchTextEncoder(len(VOCAB), d=16, layers=1, heads=1, t_max=16)
        model = FusionModel(enc, m=8)
        nn.init.zeros_(model.head.weight)
        nn.init.zeros_(model.head.bias)
        det = Detector(model, VOCAB, BehaviorNorms.fit(FIXTURE), fast_config())
        preds = det.predict(FIXTURE[:5])
        assert all(p["prob"] == 0.5 for p in preds)
        assert all(p["label"] == Label.SARCASTIC.value for p in preds)

    def test_batch_size_independence(self):
        det, _, test = trained_fixture_detector(epochs=2, patience=5)
        det.config.batch = 1
        singles = det.probabilities(test[:32])
        det.config.batch = 32
        batched = det.probabilities(test[:32])
        assert np.abs(singles - batched).max() < 1e-6

    def test_predictions_order_preserving_and_deterministic(self):
        det, _, test = trained_fixture_detector(epochs=2, patience=5)
        a = det.predict(test[:16])
        b = det.predict(test[:16])
        assert a == b
        assert [p["id"] for p in a] == [r.id for r in test[:16]]


class TestFeatureMask:
    def test_masking_equals_zeroing_column(self):
        det, _, test = trained_fixture_detector(epochs=2, patience=5)
        mask = np.ones(USER_FEATURE_DIM)
        mask[13] = 0.0
        det.set_feature_mask(mask)
        masked = det.probabilities(test[:16])
        det.set_feature_mask(None)

        from dataclasses import replace as drep

        zeroed = []
        for rec in test[:16]:
            zeroed.append(drep(rec, behavior=drep(rec.behavior, sarcasm_rate=0.0)))
        manual = det.probabilities(zeroed)
        assert np.abs(masked - manual).max() < 1e-6


class TestExportEmbeddings:
    def test_row_count_and_width(self, tmp_path):
        det, _, test = trained_fixture_detector(epochs=2, patience=5)
        out = tmp_path / "emb.csv"
        det.export_embeddings(test[:10], out)
        lines = out.read_text(encoding="utf-8").strip().splitlines()
        assert len(lines) == 11
        header = lines[0].split(",")
        d_plus_m = det.config.d + det.config.m
        assert header[:3] == ["id", "label", "prob"]
        assert header[3:] == [f"e{i}" for i in range(d_plus_m)]
        assert len(lines[1].split(",")) == 3 + d_plus_m

    def test_reexport_byte_identical(self, tmp_path):
        det, _, test = trained_fixture_detector(epochs=2, patience=5)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        det.export_embeddings(test[:10], a)
        det.export_embeddings(test[:10], b)
        assert a.read_bytes() == b.read_bytes()


class TestDetectorCheckpoint:
    def test_save_load_same_predictions(self, tmp_path):
        det, _, test = trained_fixture_detector(epochs=2, patience=5)
        det.save(tmp_path / "det")
        loaded = Detector.load(tmp_path / "det")
        a = det.probabilities(test[:8])
        b = loaded.probabilities(test[:8])
        assert np.abs(a - b).max() < 1e-7
