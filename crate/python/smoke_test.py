"""Smoke test for the Python bindings.

Build first, then run from the repository root:

    maturin develop -m crates/python/Cargo.toml      # or see README.md
    python python/smoke_test.py
"""

import sys
import tempfile
from pathlib import Path

import hybrid_al as al


def check(cond, what):
    if not cond:
        sys.exit(f"FAIL: {what}")
    print(f"ok   {what}")


def main():
    check(sorted(al.STRATEGIES) == sorted(["hcd", "lchc", "dsal", "lcd", "random", "lc-only"]), "strategy names")

    probs = [[0.7, 0.2, 0.1], [0.4, 0.4, 0.2]]
    mc, lc = al.max_confidence(probs), al.least_confidence(probs)
    check(all(abs(a + b - 1.0) < 1e-12 for a, b in zip(mc, lc)), "max + least confidence = 1")

    x, y = al.make_blobs(n=300, d=4, classes=3, spread=0.5, seed=1)
    check(len(x) == 300 and len(x[0]) == 4 and set(y) == {0, 1, 2}, "make_blobs shape")

    assignments, inertia = al.kmeans(x, 3, 0)
    check(len(assignments) == 300 and inertia > 0, "kmeans")

    pool = al.Pool(x, y, 3).split_initial(0.1, 7)
    unlabeled = pool.unlabeled_ids
    model = al.train([x[i] for i in pool.labeled_ids], [y[i] for i in pool.labeled_ids], 3, lr0=0.1, seed=3)
    feats = pool.unlabeled_features()
    batch = al.select(pool, "dsal", 10, 3, 5, probs=model.predict_proba(feats), embeddings=model.embed(feats))
    check(len(batch) == 10 and len(set(batch)) == 10 and set(batch) <= set(unlabeled), "dsal batch")
    pool = pool.move_to_labeled(batch)
    check(len(pool.labeled_ids) == 40, "move_to_labeled")

    cfg = al.RunConfig("dataset.n = 400\ndataset.d = 4\ndataset.classes = 3\nmax_iterations = 3\nlearner.epochs = 10\n")
    cfg = cfg.with_value("strategy", "lcd")
    result = al.run(cfg)
    counts = [p[1] for p in result.curve]
    check(counts == [13, 29, 45, 61], f"run curve counts {counts}")
    check(result.embeddings_csv().startswith("id,labeled_flag,selected_last_iter_flag,e0"), "embeddings csv")

    with tempfile.TemporaryDirectory() as tmp:
        result.write(tmp)
        again = al.run(al.RunConfig.from_manifest(str(Path(tmp) / "manifest.json")))
        check(again.curve_csv() == result.curve_csv(), "rerun from manifest is identical")

    rows = al.ablate(cfg, [0.0, 1.0], [0, 1], jobs=2)
    check([r[0] for r in rows] == ["dsal@0", "dsal@1"], "ablate labels")

    try:
        al.RunConfig("strategy = entropy\n")
    except al.ConfigError as e:
        check("entropy" in str(e), "config error raised")
    else:
        sys.exit("FAIL: bad strategy accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
