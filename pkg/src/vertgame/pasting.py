"""Shared helper for assembling pasting systems on one regime."""
from __future__ import annotations

import numpy as np

from .model import RegimeFundamentals
from .numerics import ExpBasis
from .values import AnalyticPiece


class Sheet:
    """Analytic candidate q(x) + c1*phi1(x) + c2*phi2(x) on one regime.

    ref1/ref2 shift the exponential basis so entries of the pasting systems
    stay O(1) on the working interval (ref1 at the right end for the growing
    root, ref2 at the left end for the decaying root).
    """

    __slots__ = ("fund", "basis")

    def __init__(self, fund: RegimeFundamentals, ref1: float, ref2: float):
        self.fund = fund
        self.basis = ExpBasis(fund.theta1, fund.theta2, ref1, ref2)

    def phi(self, x: float) -> np.ndarray:
        return self.basis.phi(x)

    def dphi(self, x: float) -> np.ndarray:
        return self.basis.dphi(x)

    def qv(self, x: float) -> float:
        return self.fund.q_value(x)

    def dq(self, x: float) -> float:
        return self.fund.q_slope(x)

    def val(self, x: float, c) -> float:
        ph = self.phi(x)
        return self.qv(x) + float(c[0]) * float(ph[0]) + float(c[1]) * float(ph[1])

    def dval(self, x: float, c) -> float:
        dph = self.dphi(x)
        return self.dq(x) + float(c[0]) * float(dph[0]) + float(c[1]) * float(dph[1])

    def d2val(self, x: float, c) -> float:
        d2 = self.basis.d2phi(x)
        return 2.0 * self.fund.q2 + float(c[0]) * float(d2[0]) + float(c[1]) * float(d2[1])

    def piece(self, lo: float, hi: float, c) -> AnalyticPiece:
        return AnalyticPiece(lo, hi, self.fund, self.basis, float(c[0]), float(c[1]))
