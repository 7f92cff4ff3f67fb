"""Order thresholds and reference errors used by ``convergence --check``."""

from __future__ import annotations

from dataclasses import dataclass

from .postprocess import ErrorRow

U_ORDER_MIN = 1.85
FIRST_ORDER_BAND = (0.85, 1.15)
REFERENCE_FACTOR = 2.0

# ex1, triangles, nu = (1, 1e-3): relative (u, L, grad u, p) errors at 128 x 128
REFERENCE_ERRORS = {
    ("ex1", "tri", (1.0, 1e-3), (0.0, 0.0), 128): (2.3843e-3, 1.1227e-2, 3.7645e-2, 4.2430e-2),
}


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_orders(rows: list[ErrorRow], label: str = "") -> list[CheckResult]:
    """Order bounds at the finest transition."""
    if len(rows) < 2 or not rows[-1].orders:
        return [CheckResult(f"{label} orders", False, "no orders available (need halving levels)")]
    o = rows[-1].orders
    lo, hi = FIRST_ORDER_BAND
    out = [CheckResult(f"{label} ord_u", o["u"] >= U_ORDER_MIN, f"{o['u']:.3f} >= {U_ORDER_MIN}")]
    for k in ("L", "gradu", "p"):
        out.append(CheckResult(f"{label} ord_{k}", lo <= o[k] <= hi, f"{o[k]:.3f} in [{lo}, {hi}]"))
    return out


def check_reference(rows: list[ErrorRow], key) -> list[CheckResult]:
    ref = REFERENCE_ERRORS.get(key)
    if ref is None:
        return []
    row = next((r for r in rows if r.n == key[-1]), None)
    if row is None:
        return []
    out = []
    for k, rv in zip(("u", "L", "gradu", "p"), ref):
        v = row.error(k)
        ok = rv / REFERENCE_FACTOR <= v <= rv * REFERENCE_FACTOR
        out.append(CheckResult(f"err_{k} at {row.n}", ok, f"{v:.4e} vs reference {rv:.4e} (factor {REFERENCE_FACTOR:g})"))
    return out
