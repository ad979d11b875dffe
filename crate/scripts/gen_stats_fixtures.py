"""Regenerates crates/core/tests/fixtures/stats_corpus.json with scipy."""
import json
import pathlib

import numpy as np
from scipy import stats

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates/core/tests/fixtures/stats_corpus.json"


def case(groups):
    f, p = stats.f_oneway(*groups)
    a, b = groups[0], groups[1]
    t = stats.ttest_ind(a, b, equal_var=False)
    va, vb = np.var(a, ddof=1) / len(a), np.var(b, ddof=1) / len(b)
    df = (va + vb) ** 2 / (va**2 / (len(a) - 1) + vb**2 / (len(b) - 1))
    return {
        "groups": [list(map(float, g)) for g in groups],
        "anova_f": float(f),
        "anova_p": float(p),
        "t": float(t.statistic),
        "t_p": float(t.pvalue),
        "t_df": float(df),
    }


def main():
    rng = np.random.default_rng(20240917)
    cases = [
        case([[1, 2, 3], [2, 3, 4], [3, 4, 5]]),
        case([[0, 0.1], [10, 10.1]]),
        case([[1, 2, 3, 4], [11, 12, 13, 14]]),
        case([[1, 2], [1.1, 2.1]]),
    ]
    while len(cases) < 50:
        k = int(rng.integers(2, 6))
        groups = []
        for _ in range(k):
            n = int(rng.integers(2, 9))
            loc = rng.normal(100, 30)
            scale = rng.uniform(0.5, 40)
            groups.append(np.round(rng.normal(loc, scale, n), 6).tolist())
        cases.append(case(groups))
    OUT.write_text(json.dumps(cases, indent=1) + "\n")


if __name__ == "__main__":
    main()
