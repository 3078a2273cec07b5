import math

import numpy as np
import pytest
from scipy import integrate

from cama.discovery import chi2_sf, g_squared_ci_test
from cama.errors import ColumnOutOfRange, StratumOverflow
from cama.matrix import IncidenceMatrix


def matrix_from_counts(counts: dict[tuple[int, ...], int], k: int) -> IncidenceMatrix:
    """Expand {row-pattern: count} into an explicit incidence matrix."""
    rows = []
    for pattern, count in sorted(counts.items()):
        rows.extend([list(pattern)] * count)
    cells = np.array(rows, dtype=np.uint8)
    return IncidenceMatrix(
        cells=cells,
        row_ids=tuple(f"r{i}" for i in range(len(rows))),
        col_keys=tuple(f"c{i}" for i in range(k)),
    )


def g2_reference(cells, x, y, s):
    """Naive dict-based G-squared: the independent oracle for the fast path."""
    strata = {}
    for row in cells:
        key = tuple(int(row[j]) for j in sorted(s))
        strata.setdefault(key, []).append((int(row[x]), int(row[y])))
    stat, dof = 0.0, 0
    for pairs in strata.values():
        counts = {(a, b): 0 for a in (0, 1) for b in (0, 1)}
        for ab in pairs:
            counts[ab] += 1
        rx = {a: counts[(a, 0)] + counts[(a, 1)] for a in (0, 1)}
        ry = {b: counts[(0, b)] + counts[(1, b)] for b in (0, 1)}
        if min(rx.values()) == 0 or min(ry.values()) == 0:
            continue
        dof += 1
        n = len(pairs)
        for a in (0, 1):
            for b in (0, 1):
                o = counts[(a, b)]
                if o:
                    stat += 2.0 * o * math.log(o * n / (rx[a] * ry[b]))
    return stat, dof


# 2 * (80 * ln 1.6 + 20 * ln 0.4), evaluated by hand
HAND_G2_40_10_10_40 = 38.548951404351494


class TestGSquared:
    def test_balanced_table_statistic_zero(self):
        z = matrix_from_counts({(1, 1): 25, (1, 0): 25, (0, 1): 25, (0, 0): 25}, 2)
        result = g_squared_ci_test(z, 0, 1, frozenset(), alpha=0.05)
        assert result.statistic == pytest.approx(0.0, abs=1e-12)
        assert result.independent

    def test_hand_computed_statistic(self):
        z = matrix_from_counts({(1, 1): 40, (1, 0): 10, (0, 1): 10, (0, 0): 40}, 2)
        result = g_squared_ci_test(z, 0, 1, frozenset(), alpha=0.05)
        assert result.statistic == pytest.approx(HAND_G2_40_10_10_40, rel=1e-9)
        assert result.dof == 1
        assert not result.independent

    def test_identical_columns_dependent(self):
        cells = np.zeros((100, 2), dtype=np.uint8)
        cells[:50] = 1
        z = IncidenceMatrix(cells=cells, row_ids=tuple(map(str, range(100))), col_keys=("a", "b"))
        result = g_squared_ci_test(z, 0, 1, frozenset(), alpha=0.05)
        assert result.p_value == pytest.approx(0.0, abs=1e-12)
        assert not result.independent

    def test_degenerate_stratum_zero_dof(self):
        # x constant: its margin is zero on one side in every stratum
        z = matrix_from_counts({(1, 1): 10, (1, 0): 10}, 2)
        result = g_squared_ci_test(z, 0, 1, frozenset(), alpha=0.05)
        assert result.dof == 0
        assert result.independent
        assert result.p_value == 1.0

    def test_matches_reference_on_random_tables(self):
        rng = np.random.default_rng(7)
        for trial in range(40):
            k = int(rng.integers(3, 6))
            n = int(rng.integers(20, 200))
            cells = (rng.random((n, k)) < rng.uniform(0.2, 0.8, size=k)).astype(np.uint8)
            z = IncidenceMatrix(
                cells=cells,
                row_ids=tuple(map(str, range(n))),
                col_keys=tuple(f"c{i}" for i in range(k)),
            )
            cond = frozenset(int(c) for c in rng.choice(k, size=int(rng.integers(0, k - 1)), replace=False))
            cond -= {0, 1}
            result = g_squared_ci_test(z, 0, 1, cond, alpha=0.05)
            ref_stat, ref_dof = g2_reference(cells, 0, 1, cond)
            assert result.dof == ref_dof
            assert result.statistic == pytest.approx(ref_stat, rel=1e-9, abs=1e-12)

    def test_conditioning_splits_strata(self):
        # within each stratum of column 2, x and y agree exactly
        z = matrix_from_counts(
            {(1, 1, 0): 20, (0, 0, 0): 20, (1, 1, 1): 20, (0, 0, 1): 20}, 3
        )
        marginal = g_squared_ci_test(z, 0, 1, frozenset(), alpha=0.05)
        conditional = g_squared_ci_test(z, 0, 1, frozenset({2}), alpha=0.05)
        assert not marginal.independent
        assert conditional.dof == 2
        assert not conditional.independent  # still perfectly associated per stratum

    def test_column_out_of_range(self):
        z = matrix_from_counts({(0, 1): 5}, 2)
        with pytest.raises(ColumnOutOfRange):
            g_squared_ci_test(z, 0, 9, frozenset(), alpha=0.05)

    def test_overlarge_conditioning_set(self):
        cells = np.zeros((4, 40), dtype=np.uint8)
        z = IncidenceMatrix(
            cells=cells,
            row_ids=tuple(map(str, range(4))),
            col_keys=tuple(f"c{i}" for i in range(40)),
        )
        with pytest.raises(StratumOverflow):
            g_squared_ci_test(z, 0, 1, frozenset(range(2, 34)), alpha=0.05)

    def test_alpha_bounds(self):
        z = matrix_from_counts({(0, 1): 5, (1, 0): 5}, 2)
        with pytest.raises(ValueError):
            g_squared_ci_test(z, 0, 1, frozenset(), alpha=0.0)


class TestChiSquareSurvival:
    def test_against_numerical_quadrature(self):
        # independent oracle: integrate the chi-square density directly
        for x, dof in [(1.0, 1), (3.84, 1), (5.99, 2), (10.0, 4), (38.55, 1)]:
            density = lambda t, d=dof: (
                t ** (d / 2 - 1) * math.exp(-t / 2) / (2 ** (d / 2) * math.gamma(d / 2))
            )
            expected, _ = integrate.quad(density, x, np.inf)
            assert chi2_sf(x, dof) == pytest.approx(expected, rel=1e-9)

    def test_zero_dof_returns_one(self):
        assert chi2_sf(5.0, 0) == 1.0
