import itertools
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rfsign.motiondetect import MDI
from rfsign.seqdecode import (
    BLANK,
    DetectionReport,
    ScoreStream,
    TriggerConfig,
    TriggerEvent,
    best_path_decode,
    classify_mdi,
    csa_trigger_double,
    csa_trigger_single,
    dtw_template_scorer,
    evaluate_detection,
    gamma_sweep,
    mtl_total_loss,
)

LABELS = (BLANK, "A", "B", "T")


def one_hot(path, labels=LABELS, hot=0.9):
    probs = np.full((len(path), len(labels)), (1 - hot) / (len(labels) - 1))
    for i, lab in enumerate(path):
        probs[i, labels.index(lab)] = hot
    return ScoreStream(probs, labels)


def constant_trigger(p, w, labels=(BLANK, "T")):
    probs = np.column_stack([np.full(w, 1 - p), np.full(w, p)])
    return ScoreStream(probs, labels)


def reference_decode(path, blank=BLANK):
    collapsed = [k for k, _ in itertools.groupby(path)]
    return [k for k in collapsed if k != blank]


class TestStream:
    def test_validation(self):
        with pytest.raises(ValueError, match="distribution"):
            ScoreStream(np.array([[0.5, 0.6]]), (BLANK, "A"))
        with pytest.raises(ValueError, match="blank"):
            ScoreStream(np.array([[0.5, 0.5]]), ("X", "A"))
        with pytest.raises(ValueError, match="match"):
            ScoreStream(np.ones((2, 3)) / 3, (BLANK, "A"))


class TestBestPath:
    def test_examples(self):
        assert best_path_decode(one_hot([BLANK, "A", "A", BLANK, "B"])) == ["A", "B"]
        assert best_path_decode(one_hot(["A", BLANK, "A"])) == ["A", "A"]
        assert best_path_decode(one_hot(["B"] * 6)) == ["B"]

    @settings(max_examples=300)
    @given(st.lists(st.sampled_from(LABELS), min_size=1, max_size=8))
    def test_matches_reference(self, path):
        out = best_path_decode(one_hot(path))
        assert out == reference_decode(path)
        assert len(out) <= len(path)


class TestClassify:
    def test_mode(self):
        s = one_hot(["A"] * 7 + ["B"] * 3)
        assert classify_mdi(s, MDI.from_steps(0, 9, 0.2)) == "A"

    def test_blank_never_wins(self):
        s = one_hot([BLANK] * 6 + ["B"] * 2)
        assert classify_mdi(s, MDI.from_steps(0, 7, 0.2)) == "B"
        assert classify_mdi(s, MDI.from_steps(0, 5, 0.2)) is None

    def test_tie_goes_to_earliest(self):
        s = one_hot(["B", "A", "A", "B"])
        assert classify_mdi(s, MDI.from_steps(0, 3, 0.2)) == "A"
        s = one_hot(["B", "B", "A", "A"])
        assert classify_mdi(s, MDI.from_steps(0, 3, 0.2)) == "B"

    def test_out_of_bounds(self):
        with pytest.raises(IndexError):
            classify_mdi(one_hot(["A"] * 3), MDI.from_steps(1, 3, 0.2))

    @given(
        st.lists(st.sampled_from(LABELS), min_size=1, max_size=10),
        arrays(float, 40, elements=st.floats(0.05, 1.0)),
    )
    def test_argmax_preserving_renormalisation(self, path, noise):
        s = one_hot(path)
        probs = s.probs * noise[: s.probs.size].reshape(s.probs.shape) ** 0.01
        probs /= probs.sum(axis=1, keepdims=True)
        assume(np.array_equal(np.argmax(probs, axis=1), np.argmax(s.probs, axis=1)))
        mdi = MDI.from_steps(0, len(path) - 1, 0.2)
        assert classify_mdi(ScoreStream(probs, LABELS), mdi) == classify_mdi(s, mdi)


class TestLoss:
    def test_weighted_example_is_exact(self):
        assert mtl_total_loss(2.0, 1.0, [1.0] * 5, [0.2] * 5) == pytest.approx(3.0)

    def test_zero_task_weights(self):
        assert mtl_total_loss(2.5, 0.7, [3.0, 4.0], [0.0, 0.0]) == 0.7 * 2.5

    def test_errors(self):
        with pytest.raises(ValueError):
            mtl_total_loss(1.0, 1.0, [1.0], [0.2, 0.2])
        with pytest.raises(ValueError):
            mtl_total_loss(1.0, -1.0, [1.0], [0.2])

    @given(
        st.floats(0, 10),
        st.lists(st.floats(0, 10), min_size=5, max_size=5),
        st.integers(0, 4),
    )
    def test_linearity(self, l_ctc, losses, i):
        base = mtl_total_loss(l_ctc, 1.0, losses, [0.2] * 5)
        doubled = list(losses)
        doubled[i] *= 2
        assert mtl_total_loss(l_ctc, 1.0, doubled, [0.2] * 5) == pytest.approx(base + 0.2 * losses[i])


class TestTriggers:
    def test_config_invariants(self):
        with pytest.raises(ValueError):
            TriggerConfig("T", gamma=0.3, gamma_low=0.5)
        with pytest.raises(ValueError):
            TriggerConfig("T", dwell_fraction=0)

    @pytest.mark.parametrize("w", [4, 7, 10])
    def test_single_fires_past_half(self, w):
        ev = csa_trigger_single(constant_trigger(1.0, w), MDI.from_steps(0, w - 1, 0.2), TriggerConfig("T", 0.5, 0.25))
        assert ev.fire_step + 1 == math.ceil(w / 2) + 1 if w % 2 == 0 else ev.fire_step + 1 == math.ceil(w / 2)
        assert ev.accumulated_score > w * 0.5

    def test_single_zero_probability(self):
        assert csa_trigger_single(constant_trigger(0.0, 8), MDI.from_steps(0, 7, 0.2), TriggerConfig("T")) is None

    def test_single_under_threshold(self):
        cfg = TriggerConfig("T", 0.7, 0.3)
        assert csa_trigger_single(constant_trigger(0.6, 10), MDI.from_steps(0, 9, 0.2), cfg) is None

    def test_double_fires_by_dwell(self):
        cfg = TriggerConfig("T", 0.7, 0.3, 0.5)
        ev = csa_trigger_double(constant_trigger(0.6, 10), MDI.from_steps(0, 9, 0.2), cfg)
        # s_a passes 3 on the sixth step (3.6); five steps above T_low are reached on the tenth
        assert ev is not None and ev.mechanism == "dwell"
        assert ev.fire_step == 9
        assert ev.accumulated_score == pytest.approx(6.0)

    def test_double_brief_spike(self):
        p = np.array([0.0] * 4 + [1.0, 1.0, 1.0, 1.0] + [0.0] * 2)
        s = ScoreStream(np.column_stack([1 - p, p]), (BLANK, "T"))
        cfg = TriggerConfig("T", 0.7, 0.3, 0.5)
        # s_a exceeds 3 only on steps 7..9 (three steps) and never reaches 7
        assert csa_trigger_double(s, MDI.from_steps(0, 9, 0.2), cfg) is None

    @settings(max_examples=200)
    @given(
        arrays(float, st.integers(1, 15), elements=st.floats(0, 1)),
        st.floats(0.05, 0.95),
        st.floats(0.1, 0.9),
        st.floats(0.1, 1.0),
    )
    def test_double_superset_of_single(self, p, gamma, ratio, dwell):
        s = ScoreStream(np.column_stack([1 - p, p]), (BLANK, "T"))
        cfg = TriggerConfig("T", gamma, gamma * ratio, dwell)
        m = MDI.from_steps(0, len(p) - 1, 0.2)
        single, double = csa_trigger_single(s, m, cfg), csa_trigger_double(s, m, cfg)
        if single is not None:
            assert double is not None and double.fire_step <= single.fire_step
            if double.mechanism == "high_threshold":
                assert double.fire_step == single.fire_step

    @settings(max_examples=200)
    @given(arrays(float, st.integers(1, 12), elements=st.floats(0, 1)), arrays(float, 12, elements=st.floats(0, 1)))
    def test_raising_probabilities_keeps_firing(self, p, bump):
        q = np.minimum(1.0, p + bump[: p.size] * (1 - p))
        cfg = TriggerConfig("T", 0.5, 0.2, 0.5)
        m = MDI.from_steps(0, len(p) - 1, 0.2)
        for rule in (csa_trigger_single, csa_trigger_double):
            if rule(ScoreStream(np.column_stack([1 - p, p]), (BLANK, "T")), m, cfg):
                assert rule(ScoreStream(np.column_stack([1 - q, q]), (BLANK, "T")), m, cfg)


class TestEvaluation:
    def test_report_arithmetic(self):
        r = DetectionReport(10, 8, 1)
        assert (r.frr, r.far) == (pytest.approx(0.2), pytest.approx(0.1))
        assert r.detection_rate == 1 - r.frr - r.far
        assert r.detection_rate == pytest.approx(0.7)
        with pytest.raises(ValueError):
            DetectionReport(0, 0, 0)

    def test_events_against_truth(self):
        truth = [MDI.from_steps(0, 4, 0.2, "T"), MDI.from_steps(10, 14, 0.2, "A"), MDI.from_steps(20, 24, 0.2, "T")]
        ev = lambda a, b: TriggerEvent(MDI.from_steps(a, b, 0.2), b, 3.0, "high_threshold")
        report = evaluate_detection([ev(1, 5), ev(9, 13), ev(40, 42)], truth, "T")
        assert (report.n_total, report.n_detected, report.n_false) == (2, 1, 2)
        all_hit = evaluate_detection([ev(0, 4), ev(20, 24)], truth, "T")
        assert all_hit.detection_rate == 1.0
        with pytest.raises(ValueError):
            evaluate_detection([], truth, "Z")

    def test_sweep_monotone(self):
        rng = np.random.default_rng(3)
        corpus = []
        for _ in range(12):
            labels, mdis, rows = [], [], []
            for k in range(4):
                lab = rng.choice(["T", "A"])
                w = int(rng.integers(3, 9))
                base = 0.75 if lab == "T" else 0.25
                p = np.clip(base + 0.3 * rng.standard_normal(w), 0, 1)
                start = sum(len(r) for r in rows)
                rows.append(p)
                mdis.append(MDI.from_steps(start, start + w - 1, 0.2, lab))
            p = np.concatenate(rows)
            corpus.append((ScoreStream(np.column_stack([1 - p, p]), (BLANK, "T")), mdis, mdis))
        assume_any = any(m.label == "T" for _, ms, _ in corpus for m in ms)
        assert assume_any
        rows = gamma_sweep(corpus, "T", np.linspace(0.01, 0.99, 40))
        for a, b in zip(rows, rows[1:]):
            for key in ("single", "double"):
                assert b[key].frr >= a[key].frr
                assert b[key].far <= a[key].far
            assert a["single_fired"] <= a["double_fired"]


class TestTemplateScorer:
    templates = {
        "up": [np.linspace(0, 1, 6)[:, None]],
        "down": [np.linspace(1, 0, 6)[:, None]],
    }

    def test_exact_context_match(self):
        feats = np.linspace(0, 1, 6)[:, None]
        s = dtw_template_scorer(feats, self.templates, context_steps=4)
        row = s.probs[-1]
        assert s.labels[int(np.argmax(row))] == "up"
        assert row[s.index("up")] >= 0.9

    def test_quiet_steps_blank(self):
        feats = np.zeros((4, 1))
        s = dtw_template_scorer(feats, self.templates, energy=np.zeros(4))
        assert all(lab == BLANK for lab in s.argmax_labels())

    def test_empty_templates(self):
        with pytest.raises(ValueError):
            dtw_template_scorer(np.zeros((3, 1)), {"a": []})
        with pytest.raises(ValueError):
            dtw_template_scorer(np.zeros((3, 1)), {})
