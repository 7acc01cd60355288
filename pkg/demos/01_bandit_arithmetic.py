"""How child selection balances exploitation and exploration.

Walks through the two scalar ingredients of the selection rule: the
exploration weight (which grows slowly with the parent's visit count) and the
prior-weighted confidence bound each child gets. Run it directly:

    python demos/01_bandit_arithmetic.py
"""

from thoughtsearch import RunConfig, compute_beta, compute_p_ucb
from thoughtsearch.core import add_child, make_root
from thoughtsearch.search import select_path

cfg = RunConfig()  # c_base=10, c_explore=4, the reference settings

print("Exploration weight as the parent accumulates visits")
print(f"{'parent visits':>14}  beta")
for visits in (0, 1, 2, 4, 8, 16, 64, 256):
    print(f"{visits:>14}  {compute_beta(visits, cfg.c_base, cfg.c_explore):.4f}")

print()
print("A parent with 2 visits comparing two children:")
print("  child A: q=0.40 prior=0.90 visits=0   (well-rated new idea)")
print("  child B: q=0.50 prior=0.60 visits=1   (already tried once)")
score_a = compute_p_ucb(0.40, 0.90, parent_visits=2, child_visits=0, cfg=cfg)
score_b = compute_p_ucb(0.50, 0.60, parent_visits=2, child_visits=1, cfg=cfg)
print(f"  score A = {score_a:.4f}")
print(f"  score B = {score_b:.4f}")
print("  -> the unvisited, well-rated child wins despite its lower q")

print()
print("select_path walks the tree with exactly this rule:")
root = make_root()
root.visits = 2
a = add_child(root, "well-rated new idea", 0.90)
a.q_value = 0.40
b = add_child(root, "already tried once", 0.60)
b.q_value, b.visits = 0.50, 1
chosen = select_path(root, cfg)
print(f"  chosen thought: {chosen.thought!r}")

print()
print("With a single-visit parent the exploration term vanishes (log 1 = 0):")
print(f"  p_ucb(q=0.37, prior=0.9, parent=1, child=0) = {compute_p_ucb(0.37, 0.9, 1, 0, cfg)}")
