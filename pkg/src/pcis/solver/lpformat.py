"""Human-readable LP-format dump (CPLEX-style sections)."""

from __future__ import annotations

import math
import re

from .problem import LinearProgram, MixedIntegerLinearProgram


def _name(raw) -> str:
    text = raw if isinstance(raw, str) else "_".join(map(str, raw)) if isinstance(raw, tuple) else str(raw)
    return re.sub(r"[^A-Za-z0-9_.]", "_", text)


def _expr(coeffs, names) -> str:
    if not coeffs:
        return "0"
    parts = []
    for j, a in sorted(coeffs.items()):
        sign = "-" if a < 0 else "+"
        parts.append(f"{sign} {abs(a):.12g} {names[j]}")
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def to_lp_format(problem: LinearProgram | MixedIntegerLinearProgram) -> str:
    milp = problem if isinstance(problem, MixedIntegerLinearProgram) else None
    lp = milp.lp if milp else problem
    names = [_name(n) for n in lp.names]
    obj = {j: c for j, c in enumerate(lp.objective) if c != 0.0}
    lines = ["Maximize" if lp.sense == "max" else "Minimize", f" obj: {_expr(obj, names)}", "Subject To"]
    op = {"<=": "<=", ">=": ">=", "==": "="}
    for i, (row, rel, b) in enumerate(zip(lp.rows, lp.relations, lp.rhs)):
        lines.append(f" c{i}: {_expr(row, names)} {op[rel]} {b:.12g}")
    lines.append("Bounds")
    binaries = milp.binaries if milp else set()
    for j, (lo, hi) in enumerate(zip(lp.lower, lp.upper)):
        if j in binaries:
            continue
        lo_s = "-inf" if math.isinf(lo) else f"{lo:.12g}"
        hi_s = "+inf" if math.isinf(hi) else f"{hi:.12g}"
        lines.append(f" {lo_s} <= {names[j]} <= {hi_s}")
    if binaries:
        lines.append("Binary")
        lines.extend(f" {names[j]}" for j in sorted(binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"
