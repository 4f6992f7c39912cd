"""Quick check that the tripsyn extension imports and produces sane numbers.

Build and install first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/tripsyn-*.whl
"""

import math
import sys
import tempfile

import tripsyn


def close(a, b, tol):
    return abs(a - b) <= tol


def main():
    names = [n for n, _ in tripsyn.presets()]
    assert "case2" in names and "wm-strong" in names, names

    rest = tripsyn.find_equilibrium(0.0)
    assert close(rest.x1, 0.6858, 1e-3), rest
    assert close(rest.x2, 0.06612, 1e-4), rest
    assert close(rest.x3, 0.8882, 1e-3), rest

    d = tripsyn.astrocyte_derivative(rest, 0.0)
    assert max(abs(v) for v in d.to_tuple()) < 1e-8, d

    eig = tripsyn.eigenvalues(tripsyn.jacobian(rest, 0.0))
    assert all(z.real < 0 for z in eig), eig

    assert tripsyn.i_astro(0.1) == 0.0
    assert close(tripsyn.i_astro(0.5), 12.06, 0.01)
    assert 0.0 <= tripsyn.j_glu(0.9, smooth=True) <= tripsyn.AstrocyteParams().a_glu

    try:
        tripsyn.AstrocyteParams(not_a_key=1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown parameter accepted")

    traj = tripsyn.simulate_extended("case2", duration=5.0, stride=100)
    assert traj["labels"][:2] == ["x1_uM", "x2_uM"], traj["labels"]
    x2 = [s[1] for s in traj["samples"]]
    assert all(math.isfinite(v) and v > 0 for v in x2)

    res = tripsyn.simulate_tripartite({"duration": 0.5, "stride": 100})
    assert len(res["pre_spikes"]) > 0, "no presynaptic spikes"

    with tempfile.TemporaryDirectory() as out:
        summary = tripsyn.run_experiment(scenario="case1", out=out, overrides=["duration=2.0"])
        assert "timeseries.csv" in summary["files"], summary["files"]

    print(f"tripsyn {tripsyn.__version__}: smoke test ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
