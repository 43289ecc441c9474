"""Refit the shipped activation tables (one per theta) into src/gausspre/data."""

import sys
import time
from pathlib import Path

from gausspre.activation_fit import SHIPPED_THETAS, build_activation, fit, shipped_table_name

SEED = 0
OUT = Path(__file__).resolve().parents[1] / "src" / "gausspre" / "data"


def main(thetas):
    OUT.mkdir(parents=True, exist_ok=True)
    for theta in thetas:
        start = time.time()
        result = fit(theta, seed=SEED)
        table = build_activation(theta, result.model, result.loss)
        table.save(OUT / shipped_table_name(theta), seed=SEED)
        print(f"theta={theta:g} loss={result.loss:.3e} params={result.model.params} ({time.time() - start:.0f}s)", flush=True)


if __name__ == "__main__":
    main([float(a) for a in sys.argv[1:]] or SHIPPED_THETAS)
