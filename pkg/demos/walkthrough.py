"""A short tour: exact risk, two shattering solvers, and a coloring pipeline.

    python3 demos/walkthrough.py

Runs in well under a minute.  For full experiments use the JSON configs in
``demos/configs`` with ``python3 -m distlll run demos/configs/<name>.json``.
"""

from fractions import Fraction

from distlll import GraphGenSpec, binary_variable, count_event, generate, solve_binary_lowrisk, solve_disjoint
from distlll.oracle import testified_risk, verify_no_risk_lemma
from distlll.problems import color_triangle_free, degree_bounded_lll, sampled_set, sinkless_orientation_lll
from distlll.problems.instances import orientation_from_assignment
from distlll.problems.validate import scan_coloring, scan_degree_bounds, scan_orientation
from distlll.shatter import auto_post_solver, cps_post_solver


def risk_demo():
    coins = [binary_variable(i, Fraction(1, 2), host=0) for i in range(2)]
    both_white = count_event(0, (0, 1), [Fraction(1, 2)] * 2, lambda blacks: blacks == 0, monotonicity="increasing")
    report = testified_risk(both_white, both_white, coins)
    print(f"risk of 'both coins white' testified by itself: {report.risk}")
    lemma = verify_no_risk_lemma(both_white, coins)
    print(f"  risk equals the event probability for monotone events: {lemma.passed}")


def sinkless_demo(seed=0):
    g = generate(GraphGenSpec("random-regular", 1000, degree=8, seed=seed))
    inst = sinkless_orientation_lll(g, split="euler")
    phi, trace = solve_disjoint(inst, post_solver=cps_post_solver(), rng=seed)
    arcs = orientation_from_assignment(g, phi)
    scan = scan_orientation(g, arcs)
    print(f"sinkless orientation, n={g.n}: valid={scan.ok}, events sent to post-shattering: {trace.n_post_events}")


def degree_bounded_demo(seed=0):
    g = generate(GraphGenSpec("random-regular", 600, degree=48, seed=seed))
    k = 8
    phi, trace = solve_binary_lowrisk(degree_bounded_lll(g, k), post_solver=auto_post_solver(), rng=seed)
    S = sampled_set(phi)
    scan = scan_degree_bounds(g, S, -(-k // 3), 4 * k)
    print(f"degree-bounded subgraph, k={k}: |S|={len(S)}, S-degrees in [{scan.stats['min']}, {scan.stats['max']}], valid={scan.ok}")


def coloring_demo(seed=0):
    g = generate(GraphGenSpec("random-bipartite-regular", 1000, degree=64, seed=seed))
    res = color_triangle_free(g, 0.9, rng=seed, k=2, activation=1.0, slack_rounds=3)
    scan = scan_coloring(g, res.colors, max_colors=res.num_colors)
    gamma = res.trace["gamma"]
    print(
        f"triangle-free coloring, Δ={g.max_degree}: {scan.stats['num_colors_used']} colors used "
        f"(budget {res.num_colors}; γ formula {gamma['formula']}, used {gamma['used']}), proper={scan.ok}"
    )


if __name__ == "__main__":
    risk_demo()
    sinkless_demo()
    degree_bounded_demo()
    coloring_demo()
