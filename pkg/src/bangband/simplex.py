"""Dense tableau simplex for small linear programs in standard inequality form.

Solves  max c.x  subject to  A x <= b, x >= 0  with b >= 0, so the slack
basis is feasible and no phase-1 is needed.  Pivoting is Dantzig by default
and switches to Bland's rule after a run of degenerate pivots, which guards
against cycling.
"""

from __future__ import annotations

import numpy as np

from .errors import LinearProgramError

_BLAND_TRIGGER = 64


def simplex_maximize(c, a_ub, b_ub, max_pivots: int | None = None):
    """Return (optimal value, primal solution) of max c.x, A x <= b, x >= 0.

    Requires b >= 0 elementwise.  Raises LinearProgramError on unbounded
    programs or pivot exhaustion.
    """
    c = np.asarray(c, dtype=float)
    a = np.asarray(a_ub, dtype=float)
    b = np.asarray(b_ub, dtype=float)
    m, n = a.shape
    if b.shape != (m,) or c.shape != (n,):
        raise ValueError("inconsistent LP dimensions")
    if np.any(b < 0):
        raise ValueError("simplex_maximize needs b >= 0 (slack basis feasible)")
    if max_pivots is None:
        max_pivots = 50 * (m + n) + 1000

    # tableau: rows 0..m-1 constraints, last row reduced costs (negated c)
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = a
    tab[:m, n : n + m] = np.eye(m)
    tab[:m, -1] = b
    tab[m, :n] = -c
    basis = list(range(n, n + m))

    degenerate_run = 0
    for _ in range(max_pivots):
        costs = tab[m, : n + m]
        if np.all(costs >= -1e-11):
            break
        if degenerate_run >= _BLAND_TRIGGER:
            # Bland: smallest index with negative reduced cost
            j = int(np.argmax(costs < -1e-11))
        else:
            j = int(np.argmin(costs))
        col = tab[:m, j]
        pos = col > 1e-11
        if not np.any(pos):
            raise LinearProgramError("linear program is unbounded")
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / col[pos]
        rmin = ratios.min()
        # leaving row: smallest basis index among the tied minimal ratios
        tied = np.flatnonzero(ratios <= rmin * (1 + 1e-12) + 1e-300)
        r = int(min(tied, key=lambda i: basis[i]))
        degenerate_run = degenerate_run + 1 if rmin <= 1e-13 else 0

        piv = tab[r, j]
        pivot_row = tab[r] / piv
        colvec = tab[:, j].copy()
        colvec[r] = 0.0
        tab -= np.outer(colvec, pivot_row)
        tab[r] = pivot_row
        basis[r] = j
    else:
        raise LinearProgramError("pivot budget exhausted")

    x = np.zeros(n + m)
    x[basis] = tab[:m, -1]
    return float(tab[m, -1]), x[:n]
