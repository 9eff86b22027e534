"""Smoke test for the `symctl` extension module.

Build and install with `maturin develop -m crates/python/Cargo.toml`, or
point PYTHONPATH at a directory holding the built library as `symctl.so`.
"""

import pathlib
import sys

import symctl

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


def main() -> int:
    scalar = (CONFIGS / "scalar.toml").read_text()
    unicycle = (CONFIGS / "unicycle.toml").read_text()

    r = symctl.report(unicycle)
    assert (r["state_bits"], r["input_bits"]) == (22, 6), r
    assert (r["n_min"], r["n_max"]) == (1, 2), r

    ok, figures = symctl.certify(scalar)
    assert ok, figures

    found, controller, counters = symctl.synthesize(scalar)
    assert found and counters["controller_entries"] > 0, counters

    first = symctl.simulate(scalar, controller, seed=5)
    second = symctl.simulate(scalar, controller, seed=5)
    assert first == second
    assert first[1].startswith("k,t,x1,u1,N_k,y1\n")

    try:
        symctl.synthesize(scalar.replace("eps = 0.3", "eps = 0.2"))
    except ValueError as e:
        assert "μx + θ ≤ ε" in str(e), e
    else:
        raise AssertionError("violated inequality accepted")

    print("smoke ok:", counters, "satisfied" if first[0] else "unsatisfied")
    return 0


if __name__ == "__main__":
    sys.exit(main())
