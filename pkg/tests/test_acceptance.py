"""End-to-end acceptance checks.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL/SKIP line per criterion.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from drbilstm.analysis import annotate, categorical_accuracy, chi_square, chi_square_table, export_heatmap, read_heatmap
from drbilstm.attention import align, energy
from drbilstm.config import ABLATIONS, ModelConfig, TrainConfig, ablation
from drbilstm.data import LABELS, load_pairs, read_snli, tokenize
from drbilstm.embeddings import build_vocabulary
from drbilstm.encoder import BiLstmParams, bilstm
from drbilstm.ensemble import learn_weights, majority_vote, weighted_average
from drbilstm.gradcheck import check_model
from drbilstm.inference import dual_max_pool, pool_fixed
from drbilstm.model import build_model, forward
from drbilstm.oov import recover_sentence
from drbilstm.tensor import Tensor
from drbilstm.trainer import encode_pairs, train

from oracles import align_loops, chi_square_formula, lstm_scalar, pool_scan, vote_counting, weighted_sum_loops

criterion = pytest.mark.criterion


@criterion("gradient fidelity: full network, r=8 d=12, max relative error < 1e-4 in < 5 min")
def test_gradient_fidelity():
    start = time.perf_counter()
    report = check_model(ModelConfig(r=8, d=12), seed=0, max_len=7, samples=30)
    elapsed = time.perf_counter() - start
    groups = {p.name for p in report.params}
    assert {"embedding", "projection.W", "mlp.W_h", "mlp.W_o"} <= groups
    assert any(g.startswith("encoder.") for g in groups) and any(g.startswith("inference.") for g in groups)
    assert report.max_error < 1e-4, "\n".join(report.lines())
    assert elapsed < 300


@criterion("attention normalisation: row and column weights sum to 1 within 1e-6 on 100 masked instances")
def test_attention_normalisation():
    rng = np.random.default_rng(7)
    for _ in range(100):
        n, m, w = (int(x) for x in rng.integers(1, 10, size=3))
        pm = np.arange(n) < int(rng.integers(1, n + 1))
        hm = np.arange(m) < int(rng.integers(1, m + 1))
        U, V = Tensor(rng.standard_normal((n, w)) * 4), Tensor(rng.standard_normal((m, w)) * 4)
        out = align(energy(U, V), U, V, pm, hm)
        np.testing.assert_allclose(out.premise_weights.data.sum(axis=1), 1.0, atol=1e-6)
        np.testing.assert_allclose(out.hypothesis_weights.data.sum(axis=1), 1.0, atol=1e-6)


@criterion("oracle equivalence: bilstm, align, dual max pool, pooling, weighted average, majority vote")
def test_oracle_equivalence():
    rng = np.random.default_rng(11)
    for _ in range(20):
        T, r, d = (int(x) for x in rng.integers(1, 6, size=3))
        bp = BiLstmParams.init(r, d, rng, dtype=np.float64)
        X = rng.standard_normal((T, r))
        H, _ = bilstm(Tensor(X), None, bp)
        zero = np.zeros(d)
        fwd, _, _ = lstm_scalar(X, bp.fwd.W.data, bp.fwd.R.data, bp.fwd.b.data, zero, zero)
        bwd, _, _ = lstm_scalar(X, bp.bwd.W.data, bp.bwd.R.data, bp.bwd.b.data, zero, zero, True)
        np.testing.assert_allclose(H.data, np.hstack([fwd, bwd]), atol=1e-12)

    for _ in range(20):
        n, m, w = (int(x) for x in rng.integers(1, 7, size=3))
        U, V = rng.standard_normal((n, w)), rng.standard_normal((m, w))
        pm = np.arange(n) < int(rng.integers(1, n + 1))
        hm = np.arange(m) < int(rng.integers(1, m + 1))
        E = energy(Tensor(U), Tensor(V))
        out = align(E, Tensor(U), Tensor(V), pm, hm)
        wp, wh, ut, vt = align_loops(E.data, U, V, pm, hm)
        for got, ref in ((out.premise_weights, wp), (out.hypothesis_weights, wh), (out.u_tilde, ut), (out.v_tilde, vt)):
            np.testing.assert_allclose(got.data, ref, atol=1e-12)

    for _ in range(20):
        T, w = (int(x) for x in rng.integers(1, 8, size=2))
        a, b = rng.standard_normal((T, w)), rng.standard_normal((T, w))
        expected = np.array([[max(a[t, k], b[t, k]) for k in range(w)] for t in range(T)])
        np.testing.assert_array_equal(dual_max_pool(Tensor(a), Tensor(b)).data, expected)
        length = int(rng.integers(1, T + 1))
        np.testing.assert_allclose(pool_fixed(Tensor(a), length).data, pool_scan(a, length), atol=1e-12)

    for _ in range(20):
        k, n = int(rng.integers(1, 7)), int(rng.integers(1, 40))
        members = [rng.dirichlet(np.ones(3), size=n) for _ in range(k)]
        w = rng.dirichlet(np.ones(k))
        np.testing.assert_allclose(weighted_average(members, w), weighted_sum_loops(members, w), atol=1e-12)
        labels = [np.argmax(p, axis=1) for p in members]
        assert list(majority_vote(labels, members)) == vote_counting([list(x) for x in labels], members)


@criterion("overfit: 64 pairs, d=50, Adam lr 4e-4, batch 32 reaches 95% training accuracy within 200 epochs in < 10 min")
def test_overfit(toy_path):
    pairs = load_pairs(toy_path)
    assert len(pairs) == 64
    vocab = build_vocabulary(pairs)
    encoded = encode_pairs(pairs, vocab)
    config = ModelConfig(r=50, d=50)
    params = build_model(config, vocab, np.random.default_rng(0))
    tcfg = TrainConfig(learning_rate=0.0004, batch_size=32, epochs=200, patience=None, seed=0)
    start = time.perf_counter()
    # the training set doubles as the dev set, so dev_acc is inference-mode training accuracy
    result = train(params, config, encoded, encoded, tcfg, on_epoch=lambda rec: rec.dev_acc >= 0.95)
    elapsed = time.perf_counter() - start
    assert result.best_dev_acc >= 0.95, f"best {result.best_dev_acc} after {len(result.history)} epochs"
    assert len(result.history) <= 200
    assert elapsed < 600


@criterion("ablation surface: all 10 reduced configurations train one step and differ from the baseline")
def test_ablation_surface(toy_path):
    pairs = load_pairs(toy_path)[:8]
    vocab = build_vocabulary(pairs)
    encoded = encode_pairs(pairs, vocab)
    base_cfg = ModelConfig(r=8, d=6, dtype="float64")

    def one_step(cfg):
        params = build_model(cfg, vocab, np.random.default_rng(0))
        train(params, cfg, encoded, encoded, TrainConfig(epochs=1, batch_size=8, patience=None))
        out = forward(params, cfg, encoded[0].premise, encoded[0].hypothesis).probs.data
        return params.parameter_count(), out

    base_count, base_out = one_step(ablation("baseline", base_cfg))
    reduced = [name for name in ABLATIONS if name != "baseline"]
    assert len(reduced) == 10
    for name in reduced:
        count, out = one_step(ablation(name, base_cfg))
        assert np.all(np.isfinite(out))
        assert count != base_count or not np.allclose(out, base_out, atol=1e-12), name


MISSPELLED_SENTENCES = [
    ("Froends ride in an open top vehicle together.", "Friends ride in an open top vehicle together."),
    ("A middle easten store.", "A middle eastern store."),
    ("A woman is looking at a phtographer", "A woman is looking at a photographer"),
    ("The mother and daughter are fighitn.", "The mother and daughter are fighting."),
    ("Two kiled men hold bagpipes", "Two killed men hold bagpipes"),
    ("A woman escapes a from a hostile enviroment", "A woman escapes a from a hostile environment"),
    ("Two daschunds play with a red ball", "Two dachshunds play with a red ball"),
    ("A black dog is running through a marsh-like area.", "A black dog is running through a marsh like area."),
    ("a singer wearing a jacker performs on stage", "a singer wearing a jacket performs on stage"),
    ("There is a sculture", "There is a sculpture"),
    ("Taking a neverending break", "Taking a never ending break"),
    ("The woman has sounds emanting from her mouth.", "The woman has sounds emanating from her mouth."),
    ("the lady is shpping", "the lady is shopping"),
    ("A Bugatti and a Lambourgini compete in a road race.", "A Bugatti and a Lamborghini compete in a road race."),
]


@criterion("preprocessing fixtures: every misspelled sentence maps exactly to its correction")
def test_preprocessing_fixtures():
    vocab = build_vocabulary([(tokenize(c), tokenize(c)) for _, c in MISSPELLED_SENTENCES])
    for original, corrected in MISSPELLED_SENTENCES:
        fixed, unknown = recover_sentence(tokenize(original), vocab)
        assert fixed == tokenize(corrected), original
        assert unknown == 0


@criterion("ensemble guarantees: learned weights never lose to the best member; weighted average within 1e-12")
def test_ensemble_guarantees():
    rng = np.random.default_rng(5)
    for k in (2, 3, 4, 5, 6):
        n = 150
        golds = rng.integers(0, 3, size=n)
        members = []
        for _ in range(k):
            p = rng.dirichlet(np.ones(3), size=n)
            hit = rng.random(n) < rng.uniform(0.2, 0.6)
            p[hit, golds[hit]] += 1.0
            members.append(p / p.sum(axis=1, keepdims=True))
        weights, acc = learn_weights(members, golds)
        best_single = max(np.mean(np.argmax(p, axis=1) == golds) for p in members)
        assert acc >= best_single
        combined = weighted_average(members, weights)
        np.testing.assert_allclose(combined, weighted_sum_loops(members, weights), atol=1e-12)
        assert np.mean(np.argmax(combined, axis=1) == golds) == acc


SNLI_FREQ = {
    "entailment": 34.3, "neutral": 32.8, "contradiction": 32.9,
    "high_overlap": 24.3, "regular_overlap": 33.7, "low_overlap": 45.4,
    "long_sentence": 6.4, "regular_sentence": 74.9, "short_sentence": 19.9,
    "negation": 2.1, "quantifier": 8.7, "belief": 0.2,
}


def _snli_test_file():
    root = os.environ.get("DRBL_DATA_DIR")
    if not root:
        return None
    for candidate in (Path(root) / "snli_1.0_test.jsonl", Path(root) / "snli_1.0" / "snli_1.0_test.jsonl"):
        if candidate.exists():
            return candidate
    return None


@criterion("SNLI calibration: gold frequencies within 0.1 points and tag frequencies within 3 points")
def test_snli_calibration():
    path = _snli_test_file()
    if path is None:
        pytest.skip("SNLI test split not available (set DRBL_DATA_DIR)")
    pairs, _ = read_snli(path)
    tags = [annotate(p) for p in pairs]
    golds = [p.label for p in pairs]
    report = categorical_accuracy({}, golds, tags)
    for label in LABELS:
        assert abs(100 * report.row(label).frequency - SNLI_FREQ[label]) <= 0.1, label
    for tag, freq in SNLI_FREQ.items():
        if tag not in LABELS:
            assert abs(100 * report.row(tag).frequency - freq) <= 3.0, tag


@criterion("chi-square: analytic statistic within 1e-3; identical systems give p = 1")
def test_chi_square():
    # hand-computed: n (ad - bc)^2 / ((a+b)(c+d)(a+c)(b+d))
    known = {
        ((10, 20), (30, 40)): 100 * 200 ** 2 / (30 * 70 * 40 * 60),
        ((90, 10), (80, 20)): 200 * (1800 - 800) ** 2 / (100 * 100 * 170 * 30),
        ((25, 25), (25, 25)): 0.0,
    }
    for table, statistic in known.items():
        assert abs(chi_square_table(table).statistic - statistic) < 1e-3
        assert abs(chi_square_formula(table) - statistic) < 1e-9
    assert abs(chi_square_table(((10, 20), (30, 40))).statistic - 0.79365) < 1e-3
    # 3.841459 is the 0.95 quantile with one degree of freedom
    assert abs(chi_square_table([[60, 40], [46.1627, 53.8373]]).p_value - 0.05) < 1e-3
    rng = np.random.default_rng(2)
    golds = rng.integers(0, 3, size=500)
    preds = rng.integers(0, 3, size=500)
    res = chi_square(preds, preds, golds)
    assert res.statistic == 0.0 and res.p_value == 1.0


@criterion("heatmap export: CSV round-trips within 1e-6 and rows sum to 1")
def test_heatmap_export(tmp_path):
    rng = np.random.default_rng(9)
    premise = list(tokenize("Male in a blue jacket decides to lay the grass."))
    hypothesis = list(tokenize("The guy in yellow is rolling on the grass."))
    E = rng.standard_normal((len(premise), len(hypothesis))) * 5
    weights = export_heatmap(E, premise, hypothesis, tmp_path / "sample")
    got_p, got_h, got = read_heatmap(tmp_path / "sample.csv")
    assert got_p == premise and got_h == hypothesis
    np.testing.assert_allclose(got, weights, atol=1e-6)
    np.testing.assert_allclose(got.sum(axis=1), 1.0, atol=1e-6)
    assert (tmp_path / "sample.svg").stat().st_size > 0
