"""Smoke test for the kan_dfm extension module.

Build and run:

    cargo build --release -p kan-dfm-py
    cp target/release/libkan_dfm_py.so python/kan_dfm.so
    python3 python/smoke_test.py
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import kan_dfm  # noqa: E402


def main():
    assert kan_dfm.scenarios() == ["drilling", "milling", "combined"]
    names = kan_dfm.feature_names("drilling")
    assert len(names) == 15

    x, y, manifest = kan_dfm.generate("drilling", 600, seed=3)
    assert len(x) == 600 and sum(y) == 300
    assert manifest["counts"]["manufacturable"] == 300
    again, _, _ = kan_dfm.generate("drilling", 600, seed=3)
    assert again == x

    engine = kan_dfm.RuleEngine()
    design = dict(zip(names, x[0]))
    report = engine.check("drilling", design)
    assert int(report["manufacturable"]) == y[0]

    model, test = kan_dfm.train("drilling", x, y, hidden=[8, 2], optimizer="adam", max_steps=5)
    assert 0.0 <= test["auc"] <= 1.0
    p = model.predict(design)
    assert 0.0 < p < 1.0
    assert model.classify(design) == int(p >= model.threshold)
    assert model.predict_batch(x[:3])[0] == p

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.json")
        model.save(path)
        loaded = kan_dfm.KanModel.load(path)
        assert loaded.predict_batch(x[:50]) == model.predict_batch(x[:50])
        csv = os.path.join(d, "d.csv")
        kan_dfm.save_csv(csv, "drilling", x, y)
        sid, x2, y2 = kan_dfm.load_csv(csv)
        assert sid == "drilling" and x2 == x and y2 == y

    attr = model.explain(design, x[:64], budget=60)
    total = sum(f["contribution"] for f in attr["features"])
    assert abs(attr["baseline"] + total - attr["output"]) < 1e-9

    curves = model.splines(points=5)
    assert len(curves["edges"]) == 15 * 8 + 8 * 2 + 2
    rows = model.latent(x[:10], y[:10])
    assert len(rows) == 10

    try:
        engine.check("drilling", {"B1": 1.0})
    except ValueError as e:
        assert "B2" in str(e)
    else:
        raise AssertionError("missing parameters accepted")

    print(json.dumps({"ok": True, "test_auc": round(test["auc"], 4), "p": round(p, 4)}))


if __name__ == "__main__":
    main()
