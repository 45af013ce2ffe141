from dataclasses import dataclass
from importlib import resources

import pytest

from multisol import config as cfgmod
from multisol.certify import certify
from multisol.functionals import ProblemSpec
from multisol.minimizer import find_all
from multisol.nonlinearity import detect_wells
from multisol.radial_grid import build_grid

BUNDLED = ("elliptic_single_well", "kg_single_well", "kgm_single_well", "nls_near_origin", "nls_single_well",
           "nls_two_well", "two_well_elliptic")


def bundled_path(name):
    return resources.files("multisol") / "data" / f"{name}.cfg"


@dataclass
class Run:
    spec: ProblemSpec
    wells: object
    opts: object
    results: list
    certificates: list


def solve_config(cfg, grid=None):
    spec = cfgmod.build_problem(cfg)
    if grid is not None:
        spec = ProblemSpec(spec.kind, spec.nl, spec.constraint_value, grid, spec.e_charge)
    opts = cfgmod.build_solver(cfg)
    wells = detect_wells(spec.nl, opts.s_max, opts.scan_points, opts.root_tol)
    results = find_all(spec, opts, wells=wells)
    certs = [certify(spec, r, wells) for r in results if r.converged]
    return Run(spec, wells, opts, results, certs)


@pytest.fixture(scope="session")
def bundled():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = solve_config(cfgmod.load(bundled_path(name)))
        return cache[name]

    return get


@pytest.fixture(scope="session")
def nls_fine():
    """Single-well NLS at c = 5 on M = 4096, r_max = 60."""
    cfg = cfgmod.load(bundled_path("nls_single_well"))
    return solve_config(cfg, grid=build_grid(3, 60.0, 4096, 8.0))


ACCEPTANCE = []


def acceptance_line(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
