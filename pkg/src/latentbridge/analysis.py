"""Spectrum diagnostics for a batch of compact codes ``Z`` (B x d_C).

Eigenvalues are taken as squared singular values of ``Z`` itself. The 1/B
factor of the correlation matrix ``Z^T Z / B`` cancels in both the effective
dimension and the condition number, so reports do not drift with batch size.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .nn.linalg import svd

TIE_TOL = 1e-9


@dataclass
class SpectrumReport:
    sigma: np.ndarray
    kappa: float  # sigma_max / sigma_min; inf when sigma_min == 0
    d_eff: float  # (sum lam)^2 / sum lam^2 with lam = sigma^2
    offdiag_ratio: float  # mean |off-diagonal| / mean |diagonal| of Z^T Z / B
    batch: int
    d_c: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sigma"] = [float(s) for s in self.sigma]
        d["kappa"] = self.kappa if math.isfinite(self.kappa) else "inf"
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_table(self) -> str:
        lines = [
            f"{'batch (B)':<16}{self.batch}",
            f"{'d_C':<16}{self.d_c}",
            f"{'sigma_max':<16}{self.sigma[0]:.6g}",
            f"{'sigma_min':<16}{self.sigma[-1]:.6g}",
            f"{'kappa':<16}{self.kappa:.6g}",
            f"{'d_eff':<16}{self.d_eff:.6g}",
            f"{'offdiag_ratio':<16}{self.offdiag_ratio:.6g}",
        ]
        return "\n".join(lines) + "\n"

    def write_sigma_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "sigma"])
            for i, s in enumerate(self.sigma):
                w.writerow([i, f"{s:.17g}"])


def effective_dimension(eigenvalues) -> float:
    lam = np.asarray(eigenvalues, dtype=np.float64)
    return float(lam.sum() ** 2 / np.sum(lam * lam))


def spectrum(z) -> SpectrumReport:
    """Singular values, condition number, effective dimension and correlation redundancy.

    When B < d_C only B singular values exist and kappa uses the smallest of
    those.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or min(z.shape) < 1:
        raise ValueError(f"need a (B, d_C) matrix, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("code batch contains non-finite values")
    _, sigma, _ = svd(z)
    if sigma[0] == 0.0:
        raise ValueError("all-zero code batch has no spectrum")
    kappa = float(sigma[0] / sigma[-1]) if sigma[-1] > 0 else math.inf
    corr = z.T @ z / z.shape[0]
    diag = np.abs(np.diag(corr))
    off = np.abs(corr[~np.eye(corr.shape[0], dtype=bool)])
    offdiag = float(off.mean() / diag.mean()) if off.size else 0.0
    return SpectrumReport(sigma, kappa, effective_dimension(sigma**2), offdiag, z.shape[0], z.shape[1])


def compare_runs(a: SpectrumReport, b: SpectrumReport) -> str:
    """Which run uses its code budget better: larger d_eff first, then smaller kappa."""
    if a.d_c != b.d_c:
        raise ValueError(f"cannot compare runs with d_C {a.d_c} and {b.d_c}")
    if abs(a.d_eff - b.d_eff) > TIE_TOL:
        return "a_more_efficient" if a.d_eff > b.d_eff else "b_more_efficient"
    if a.kappa == b.kappa or abs(a.kappa - b.kappa) <= TIE_TOL:
        return "tie"
    return "a_more_efficient" if a.kappa < b.kappa else "b_more_efficient"
