import io
from pathlib import Path

from patisson_pusher.core import ParticleState, linear_potential_model
from patisson_pusher.harness import CONVERGENCE_COLUMNS, ConvergenceRow
from patisson_pusher.integrators import SolverParams, integrate
from patisson_pusher.methods import Method, MethodSpec
from patisson_pusher.output import format_number, write_manifest, write_rows_csv, write_trajectory_csv


def test_format_number():
    assert format_number(None) == ""
    assert format_number(3) == "3"
    assert format_number(True) == "1"
    assert format_number(0.1) == "0.1"
    assert format_number(1e-20) == "1e-20"
    assert format_number(2.0**-9) == "0.001953125"
    assert float(format_number(1 / 3)) == 1 / 3


def test_trajectory_without_momentum():
    model = linear_potential_model("slope", (0, 0, 1), lambda xi: 0.5 * xi, lambda xi: 0.5)
    state = ParticleState.from_components((0, 0, 0), (0, 0, 1))
    record = integrate(state, model, MethodSpec(kind=Method.EP_EXACT, h=0.5), SolverParams(), 1.0)
    stream = io.StringIO()
    write_trajectory_csv(record, stream)
    lines = stream.getvalue().splitlines()
    assert len(lines) == 4
    assert lines[0] == "t,x1,x2,x3,v1,v2,v3,energy,energy_err,momentum,momentum_err,fp_iters"
    assert lines[1] == "0.0,0.0,0.0,0.0,0.0,0.0,1.0,0.5,0.0,,,0"
    assert all(line.split(",")[9:11] == ["", ""] for line in lines[1:])


def test_rows_csv():
    rows = [
        ConvergenceRow(method=Method.EP_EXACT, h=0.5, horizon=10.0, steps=20, global_error=1.5e-7),
        ConvergenceRow(method=Method.BORIS, h=0.25, horizon=10.0, status="step 3 at t=0.5: divergence, x"),
    ]
    stream = io.StringIO()
    write_rows_csv(rows, CONVERGENCE_COLUMNS, stream)
    assert stream.getvalue().splitlines() == [
        "method,T,h,global_error,observed_order,status,steps,max_fp_iters",
        "ep-exact,10.0,0.5,1.5e-07,,ok,20,0",
        'boris,10.0,0.25,,,"step 3 at t=0.5: divergence, x",0,0',
    ]


def test_manifest(tmp_path: Path):
    path = tmp_path / "nested" / "manifest.txt"
    manifest = {"experiment": "longtime", "config": {"stepsizes": [0.05, 0.1], "oracle": {"tol": 1e-15}}}
    write_manifest(manifest, path)
    assert path.read_text(encoding="utf-8").splitlines() == [
        "experiment: longtime",
        "config.stepsizes: 0.05,0.1",
        "config.oracle.tol: 1e-15",
    ]
