import numpy as np
import pytest

import advt


@pytest.fixture(scope="module")
def data():
    return advt.synthetic_train_test(1500, 200, 7)


@pytest.fixture(scope="module")
def logreg(data):
    tr = data["train"]
    return advt.train("logreg", tr["x"], tr["y"], seed=2)


def test_synthetic_shapes(data):
    assert data["train"]["x"].shape == (1500, 64)
    assert len(data["test"]["y"]) == 200
    assert data["train"]["num_classes"] == 10
    again = advt.synthetic_train_test(1500, 200, 7)
    assert np.array_equal(again["train"]["x"], data["train"]["x"])


def test_model_basics(data, logreg, tmp_path):
    te = data["test"]
    assert logreg.family == "logreg"
    assert logreg.dim == 64
    assert logreg.accuracy(te["x"], te["y"]) > 0.7
    preds = logreg.predict_batch(te["x"])
    assert preds[0] == logreg.predict(te["x"][0])
    scores = logreg.scores(te["x"][0])
    assert scores.sum() == pytest.approx(1.0)
    assert logreg.jacobian(te["x"][0]).shape == (10, 64)
    path = tmp_path / "m.json"
    logreg.save(str(path))
    back = advt.Model.load(str(path))
    assert back.predict_batch(te["x"]) == preds


def test_fgsm_hand_values(data, logreg):
    x = data["test"]["x"][0]
    adv = advt.fgsm(logreg, x, 0.3)
    assert np.abs(adv - x).max() <= 0.3 + 1e-12
    assert adv.min() >= 0.0 and adv.max() <= 1.0
    assert np.array_equal(advt.fgsm(logreg, x, 0.0), x)


def test_craft_batch(data, logreg):
    te = data["test"]
    out = advt.craft(logreg, te["x"], te["y"], 0.3)
    assert out["method"] == "fgsm"
    assert out["x_adv"].shape == te["x"].shape
    assert out["source_misclassification"] > 0.5


def test_query_count_values():
    assert advt.query_count(150, 3, 400, 6, False) == 9600
    assert advt.query_count(150, 3, 400, 6, True) == 150 * 2**3 + 3 * 400
    assert advt.step_size(0.1, 3, 3) == pytest.approx(-0.1)
    chosen = advt.reservoir_select(20, 5, 1)
    assert len(chosen) == 5 and len(set(chosen)) == 5


def test_errors(logreg):
    with pytest.raises(advt.UnsupportedFamilyError):
        advt.svm_attack(logreg, np.zeros(64), 1.0)
    with pytest.raises(advt.AdvtError):
        advt.train("forest", np.zeros((4, 64)), [0, 1, 0, 1])
    oracle = advt.LocalOracle(logreg, budget=2)
    oracle.query(np.zeros(64))
    oracle.query(np.zeros(64))
    with pytest.raises(advt.BudgetExhausted):
        oracle.query(np.zeros(64))
    assert oracle.queries == 2


def test_server_matches_local(data, logreg):
    server = advt.OracleServer(logreg)
    server.start()
    try:
        remote = advt.HttpOracle(server.url)
        x = data["test"]["x"][:50]
        assert remote.query_batch(x, 4) == logreg.predict_batch(x)
        assert server.queries == 50
        with pytest.raises(advt.ContractError):
            remote.query(np.zeros(3))
    finally:
        server.stop()


def test_substitute_and_blackbox(data, logreg):
    te = data["test"]
    cfg = advt.SubstituteConfig()
    cfg.family = "logreg"
    cfg.rho_max = 2
    cfg.seed = 3
    oracle = advt.LocalOracle(logreg)
    probe_y = logreg.predict_batch(te["x"][50:])
    state = advt.train_substitute(oracle, te["x"][:20], te["x"][50:], probe_y, cfg)
    assert state["queries"] == 80 == oracle.queries
    assert len(state["history"]) == 3
    assert state["model"].family == "logreg"

    report = advt.blackbox_attack(advt.LocalOracle(logreg), advt.LocalOracle(logreg),
                                  te["x"][:20], te["x"][50:], te["y"][50:], cfg, 0.3)
    assert report["kind"] == "blackbox"
    assert report["substitute_queries"] == 80


def test_cross_matrix_report(data):
    tr, te = data["train"], data["test"]
    models = advt.train_cross_models(tr["x"], tr["y"], 3)
    assert [m.family for m in models] == ["net", "logreg", "svm", "tree", "knn"]
    report = advt.cross_matrix(models, te["x"][:60], te["y"][:60])
    assert report["kind"] == "cross"
    assert report["targets"][-1] == "ensemble"
