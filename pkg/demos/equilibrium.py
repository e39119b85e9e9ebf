"""Solve the inspection game on the bundled fixtures.

    python3 demos/equilibrium.py
"""
from cutrope import format_solution_tables, load_fixture, normalize, solve_equilibrium, verify_equilibrium

for name in ("two_path", "mercadolibre_human", "five_path", "pornbox_human"):
    norm = normalize(load_fixture(name))
    sol = solve_equilibrium(norm)
    check = verify_equilibrium(sol.matrix, sol)
    print(f"==== {name} ({'degenerate: ' + sol.reason if sol.degenerate else 'regular'};"
          f" worst deviation {check.worst_deviation:.1e})")
    print(format_solution_tables(sol, norm))
