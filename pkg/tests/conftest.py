import pytest

from blockgd import SolverConfig, broyden_problem, li_problem, solve


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile/load the numba kernels once so timed tests measure the loop only."""
    solve(broyden_problem(12), SolverConfig(method="scbgd", q=3, seed=0, max_iter=20))
    solve(li_problem(12), SolverConfig(method="scbgd", q=3, seed=0, max_iter=20))
