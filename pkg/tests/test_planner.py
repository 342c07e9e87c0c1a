import json
import logging
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

import oracles
from contactrrt import fixtures
from contactrrt.geometry import (GoalRegion, Ray, SurfacePoint, is_valid_surface_point,
                                 lumen_winding_number, ray_intersect, resolve_start)
from contactrrt.planner import (ContactRRT, PlannerConfig, Primitive, Status, Tree, TreeNode,
                                check_concavity, compute_alignment, compute_steer_vector,
                                extend_glide, extend_launch, extend_rebound, extract_path,
                                find_nearest_node, plan, solve_tip_distance, tip_angle)

vec3 = st.tuples(*[st.floats(-10, 10, allow_nan=False, allow_infinity=False)] * 3)


def sp(x, face=0):
    return SurfacePoint(np.asarray(x, dtype=float), face)


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _start(fx, seed=0):
    point, axis = fx.inlet.sample(np.random.default_rng([seed, 0x1A7E]))
    return resolve_start(fx.mesh, point, axis)


# --- nearest / steer / alignment ---------------------------------------------

def test_nearest_single_and_ordering():
    tree = Tree(sp([0, 0, 0]))
    assert find_nearest_node(tree, sp([5, 5, 5])) == 0
    tree.add(TreeNode(sp([3, 0, 0]), 0, Primitive.GLIDE))
    tree.add(TreeNode(sp([0, 4, 0]), 0, Primitive.GLIDE))
    assert find_nearest_node(tree, sp([2, 0, 0])) == 1
    # equidistant nodes: lowest id wins
    assert find_nearest_node(tree, sp([1.5, 0, 0])) == 0


def test_nearest_matches_exhaustive_scan(rng):
    pts = rng.normal(size=(500, 3))
    tree = Tree(sp(pts[0]))
    for p in pts[1:]:
        tree.add(TreeNode(sp(p), 0, Primitive.GLIDE))
    for q in rng.normal(size=(100, 3)):
        best = min(range(500), key=lambda i: (float(np.sum((pts[i] - q) ** 2)), i))
        assert find_nearest_node(tree, sp(q)) == best


def test_steer_vector_examples():
    n = np.array([0.0, 1.0, 0.0])
    assert np.allclose(compute_steer_vector(sp([0, 0, 0]), sp([1, 0, 2]), n), [1, 0, 2])
    assert np.allclose(compute_steer_vector(sp([0, 0, 0]), sp([0, 3, 0]), n), 0)
    assert np.allclose(compute_steer_vector(sp([0, 0, 0]), sp([1, 1, 0]), n), [1, 0, 0])


@given(vec3, vec3)
def test_steer_vector_is_tangent(d, n):
    n = np.asarray(n)
    assume(np.linalg.norm(n) > 1e-3)
    n = n / np.linalg.norm(n)
    u = compute_steer_vector(sp([0, 0, 0]), sp(d), n)
    assert abs(u @ n) <= 1e-9 * max(1.0, np.linalg.norm(d))


def test_alignment_examples():
    q_prev, q_near = np.zeros(3), np.array([1.0, 0, 0])
    assert compute_alignment(np.array([2.0, 0, 0]), q_near, q_prev) == pytest.approx(1.0)
    assert compute_alignment(np.array([-1.0, 0, 0]), q_near, q_prev) == pytest.approx(-1.0)
    assert compute_alignment(np.array([0, 1.0, 0]), q_near, q_prev) == pytest.approx(0.0)
    assert compute_alignment(np.array([0, 1.0, 0]), q_near) == 1.0


@given(vec3, vec3)
def test_alignment_is_a_cosine(u, inc):
    u, inc = np.asarray(u), np.asarray(inc)
    assume(np.linalg.norm(u) > 1e-6 and np.linalg.norm(inc) > 1e-6)
    c = compute_alignment(u, inc, np.zeros(3))
    assert -1.0 <= c <= 1.0
    assert c == pytest.approx(u @ inc / np.linalg.norm(u) / np.linalg.norm(inc), abs=1e-9)


# --- concavity ---------------------------------------------------------------

def test_concavity_coplanar_is_zero():
    mesh = fixtures.plane()
    f = 55
    res = check_concavity(mesh, sp(mesh.centroids[f], f), _unit([1, 0.3, 0]))
    assert res.kappa == 0.0
    assert res.adjacent_face is not None


def test_concavity_matches_analytic_cylinder(rng):
    n_around = 24
    mesh = fixtures.tube(radius=5.0, length=60.0, n_around=n_around, n_along=30)

    def facet_normal(face):
        # inward normal of the facet spanning the angular sector that holds its centroid
        c = mesh.centroids[face]
        j = math.floor(math.atan2(c[1], c[0]) / (2 * math.pi / n_around))
        mid = (j + 0.5) * 2 * math.pi / n_around
        return -np.array([math.cos(mid), math.sin(mid), 0.0])

    signs = set()
    for _ in range(200):
        f = int(rng.integers(mesh.n_faces))
        c = mesh.centroids[f]
        if not 10 < c[2] < 50:
            continue
        n = mesh.face_normals[f]
        u = rng.normal(size=3)
        u = _unit(u - (u @ n) * n)
        res = check_concavity(mesh, sp(c, f), u)
        expect = u @ np.cross(facet_normal(f), facet_normal(res.adjacent_face))
        assert res.kappa == pytest.approx(expect, abs=1e-9)
        signs.add(np.sign(round(expect, 12)))
    assert {-1.0, 1.0} <= signs


def test_concavity_along_axis_is_zero(tube_fx):
    mesh = tube_fx.mesh
    f = int(np.argmin(np.abs(mesh.centroids[:, 2] - 30)))
    res = check_concavity(mesh, sp(mesh.centroids[f], f), np.array([0, 0, 1.0]))
    assert res.kappa == 0.0


def test_concavity_open_boundary_is_flat(caplog):
    mesh = fixtures.square()
    with caplog.at_level(logging.WARNING, logger="contactrrt.planner"):
        res = check_concavity(mesh, sp(mesh.centroids[0], 0), np.array([1.0, 0, 0]))
    assert res.kappa == 0.0 and res.adjacent_face is None
    assert "boundary" in caplog.text


# --- glide -------------------------------------------------------------------

def test_glide_on_plane_is_exact():
    mesh = fixtures.plane()
    q = sp(mesh.centroids[109], 109)
    u = _unit([0.6, -0.8, 0])
    new = extend_glide(mesh, q, u, 2.0)
    assert np.allclose(new.position, q.position + 2.0 * u, atol=1e-12)
    assert extend_glide(mesh, q, u, 0.0) is q


def test_glide_on_cylinder_stays_near_arc():
    R = 20.0
    mesh = fixtures.tube(radius=R, length=10.0, n_around=720, n_along=2)
    f = int(np.argmin(np.linalg.norm(mesh.centroids - [R, 0, 5], axis=1)))
    q = sp(mesh.centroids[f], f)
    n = mesh.face_normals[f]
    u = _unit(np.cross(n, [0, 0, 1.0]))
    delta = 0.5
    new = extend_glide(mesh, q, u, delta)
    target = q.position + delta * u
    assert np.linalg.norm(new.position - target) < delta ** 2 / (2 * R) + 1e-9
    assert is_valid_surface_point(mesh, new)


# --- launch ------------------------------------------------------------------

def test_tip_distance_planar_example():
    q_near, u, q_s = np.zeros(3), np.array([1.0, 0, 0]), np.array([2.0, 1.0, 0])
    theta = math.radians(45)
    lam = solve_tip_distance(q_near, u, q_s, theta, 1e-5, 20.0)
    grid = np.linspace(1e-5, 20.0, 20_001)
    # dense grid search on the angle written out directly
    errs = np.abs(np.arctan2(1.0, grid - 2.0) - theta)
    lam_grid = grid[int(np.argmin(errs))]
    assert lam == pytest.approx(3.0, abs=1e-9)
    assert lam == pytest.approx(lam_grid, abs=grid[1] - grid[0])
    assert abs(tip_angle(q_near, u, q_s, lam) - theta) < 1e-6


def test_tip_distance_collinear_has_no_solution():
    assert solve_tip_distance(np.zeros(3), np.array([1.0, 0, 0]), np.array([2.0, 0, 0]),
                              math.radians(45), 1e-5, 20.0) is None


def test_tip_distance_out_of_range():
    # the solution at lam = 3 lies beyond lam_max
    assert solve_tip_distance(np.zeros(3), np.array([1.0, 0, 0]), np.array([2.0, 1.0, 0]),
                              math.radians(45), 1e-5, 2.5) is None


@settings(max_examples=200, deadline=None)
@given(st.floats(0.1, 10), st.floats(-10, 10), st.floats(math.radians(30), math.radians(90)))
def test_tip_distance_solves_angle(off, along, theta):
    q_s = np.array([along, off, 0.0])
    lam = solve_tip_distance(np.zeros(3), np.array([1.0, 0, 0]), q_s, theta, 1e-5, 50.0)
    expect = along + off / math.tan(theta)
    if 1e-5 < expect <= 50.0:
        assert lam is not None
        assert lam == pytest.approx(expect, abs=1e-6)
        assert abs(tip_angle(np.zeros(3), np.array([1.0, 0, 0]), q_s, lam) - theta) < 1e-6
    elif expect <= 1e-5 or expect > 50.0 + 1e-6:
        assert lam is None


def test_launch_in_tube_hits_wall_at_theta(tube_fx):
    mesh = tube_fx.mesh
    q_near = resolve_start(mesh, [0, 0, 20], [1, 0, 0])
    # lean slightly off the wall so the virtual tip sits in the open lumen
    u = _unit([-0.2, 0.0, 1.0])
    target = resolve_start(mesh, [0, 0, 28], [-1, 0, 0])
    theta = math.radians(45)
    out = extend_launch(mesh, q_near, u, target, theta, 20.0)
    assert out is not None
    tip, q_new = out
    assert lumen_winding_number(mesh, tip)[0] > 0.5
    a, b = q_new.position - tip, q_near.position - tip
    assert math.atan2(np.linalg.norm(np.cross(a, b)), a @ b) == pytest.approx(theta, abs=1e-6)
    assert is_valid_surface_point(mesh, q_new)


def test_launch_tip_outside_narrow_lumen():
    # on a small sphere every tangent line leaves the lumen right away
    mesh = fixtures.icosphere(radius=1.0, subdivisions=2)
    f = 0
    q_near = sp(mesh.centroids[f], f)
    n = mesh.face_normals[f]
    u = _unit(np.cross(n, [0.3, 0.1, 0.9]))
    target = sp(q_near.position + 2.0 * u + 0.5 * n)
    assert solve_tip_distance(q_near.position, u, target.position, math.radians(45),
                              1e-5, 20.0) is not None
    assert extend_launch(mesh, q_near, u, target, math.radians(45), 20.0) is None


# --- rebound -----------------------------------------------------------------

def test_rebound_chord_in_cylinder(tube_fx):
    mesh = tube_fx.mesh
    start = resolve_start(mesh, [0, 0, 20], [1, 0, 0])
    for beta in np.radians([0, 10, 30, 50]):
        d = np.array([-math.cos(beta), 0.0, math.sin(beta)])
        q = extend_rebound(mesh, start, d)
        t = np.linalg.norm(q.position - start.position)
        assert t == pytest.approx(oracles.prism_exit(5.0, 24, start.position, d), abs=1e-6)
        assert t == pytest.approx(10.0 / math.cos(beta), abs=1e-6)


def test_rebound_out_of_open_end(tube_fx):
    start = resolve_start(tube_fx.mesh, [0, 0, 50], [1, 0, 0])
    assert extend_rebound(tube_fx.mesh, start, _unit([-0.05, 0, 1])) is None


def test_rebound_grazing_face_is_none():
    mesh = fixtures.plane()
    assert extend_rebound(mesh, sp(mesh.centroids[3], 3), np.array([1.0, 0, 0])) is None


# --- full planner ------------------------------------------------------------

def test_trivial_goal(tube_fx):
    q = _start(tube_fx)
    res = plan(tube_fx.mesh, q, PlannerConfig(goal=GoalRegion([q.face_id]), max_iterations=50))
    assert res.status is Status.REACHED
    assert res.iterations_used == 0
    assert len(res.path) == 1 and res.path[0].primitive is Primitive.ROOT


def test_zero_budget(tube_fx):
    res = plan(tube_fx.mesh, _start(tube_fx), PlannerConfig(goal=tube_fx.goal, max_iterations=0))
    assert res.status is Status.BUDGET_EXHAUSTED
    assert res.tree_size == 1
    assert res.path == []


def test_straight_tube_100_seeds():
    fx = fixtures.get_fixture("straight_tube")
    worst = 0
    for seed in range(100):
        res = plan(fx.mesh, _start(fx, seed),
                   PlannerConfig(goal=fx.goal, max_iterations=5000, seed=seed))
        assert res.reached
        worst = max(worst, res.iterations_used)
    assert worst <= 5000


@pytest.mark.parametrize("name", ["straight_tube", "y_bifurcation", "aortic_arch"])
def test_determinism(name):
    fx = fixtures.get_fixture(name)
    cfg = PlannerConfig(goal=fx.goal, max_iterations=3000, seed=7)
    a = plan(fx.mesh, _start(fx, 7), cfg)
    b = plan(fx.mesh, _start(fx, 7), cfg)
    assert json.dumps(a.to_dict(False)) == json.dumps(b.to_dict(False))
    assert len(a.tree) == len(b.tree)
    for x, y in zip(a.tree.nodes, b.tree.nodes):
        assert np.array_equal(x.point.position, y.point.position)
        assert x.parent == y.parent and x.primitive == y.primitive


@pytest.fixture(scope="module")
def grown_trees():
    trees = []
    for name in ("straight_tube", "y_bifurcation", "aortic_arch"):
        fx = fixtures.get_fixture(name)
        cfg = PlannerConfig(goal=None, max_iterations=600, seed=3)
        planner = ContactRRT(fx.mesh, _start(fx, 3), cfg)
        planner.run()
        trees.append((fx.mesh, cfg, planner.tree))
    return trees


def test_tree_invariants(grown_trees):
    seen = set()
    for mesh, cfg, tree in grown_trees:
        assert tree[0].parent is None
        for i, node in enumerate(tree.nodes):
            assert is_valid_surface_point(mesh, node.point)
            if i == 0:
                continue
            seen.add(node.primitive)
            assert 0 <= node.parent < i
            assert (node.tip_point is not None) == (node.primitive is Primitive.LAUNCH)
            parent = tree[node.parent]
            if parent.parent is not None:
                incoming = parent.point.position - tree[parent.parent].point.position
                assert compute_alignment(node.steer, parent.point.position,
                                         tree[parent.parent].point.position) >= cfg.bend_threshold
                assert np.linalg.norm(incoming) > 0
    assert seen == {Primitive.GLIDE, Primitive.REBOUND, Primitive.LAUNCH}


def test_nodes_reproduce_from_parent(grown_trees):
    for mesh, cfg, tree in grown_trees:
        for node in tree.nodes[1:]:
            parent = tree[node.parent].point
            if node.primitive is Primitive.GLIDE:
                again = extend_glide(mesh, parent, node.steer, cfg.step_size)
            elif node.primitive is Primitive.REBOUND:
                again = extend_rebound(mesh, parent, node.steer, cfg.min_t)
            else:
                tip = node.tip_point
                assert lumen_winding_number(mesh, tip)[0] >= 0.5
                a, b = node.point.position - tip, parent.position - tip
                angle = math.atan2(np.linalg.norm(np.cross(a, b)), a @ b)
                assert angle == pytest.approx(cfg.catheter_angle, abs=1e-6)
                assert np.linalg.norm(tip - parent.position - (tip - parent.position) @ node.steer
                                      * node.steer) < 1e-9
                again, _ = ray_intersect(mesh, Ray.towards(tip, node.point.position),
                                         min_t=cfg.min_t)
            assert np.linalg.norm(again.position - node.point.position) < 1e-9
            assert again.face_id == node.point.face_id


# --- path extraction ---------------------------------------------------------

def test_extract_path_small_cases():
    tree = Tree(sp([0, 0, 0]))
    assert [n.parent for n in extract_path(tree, 0)] == [None]
    tree.add(TreeNode(sp([1, 0, 0]), 0, Primitive.GLIDE))
    tree.add(TreeNode(sp([2, 0, 0]), 1, Primitive.GLIDE))
    path = extract_path(tree, 2)
    assert [n.point.position[0] for n in path] == [0, 1, 2]


def test_extract_path_random_tree(rng):
    tree = Tree(sp([0, 0, 0]))
    parents = [None]
    for i in range(1, 1000):
        p = int(rng.integers(i))
        parents.append(p)
        tree.add(TreeNode(sp([i, 0, 0]), p, Primitive.GLIDE))
    for goal in rng.integers(1000, size=20):
        chain = []
        i = int(goal)
        while i is not None:
            chain.append(i)
            i = parents[i]
        assert [int(n.point.position[0]) for n in extract_path(tree, int(goal))] == chain[::-1]


# --- config / serialisation --------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        PlannerConfig(step_size=0)
    with pytest.raises(ValueError):
        PlannerConfig(bend_threshold=1.5)
    with pytest.raises(ValueError):
        PlannerConfig(catheter_angle=math.radians(10))
    PlannerConfig(catheter_angle=math.radians(10), angle_range=(0.0, math.pi / 2))
    with pytest.raises(ValueError):
        PlannerConfig(tip_scan=0)


def test_config_and_node_round_trip():
    cfg = PlannerConfig(goal=GoalRegion([1, 5]), seed=9, step_size=1.5)
    assert PlannerConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    node = TreeNode(sp([1, 2, 3], 4), 0, Primitive.LAUNCH, np.array([0.5, 0, 0]),
                    np.array([1.0, 0, 0]))
    back = TreeNode.from_dict(json.loads(json.dumps(node.to_dict())))
    assert back.primitive is Primitive.LAUNCH
    assert np.array_equal(back.tip_point, node.tip_point)
    assert back.point.face_id == 4


def test_invalid_goal_rejected(tube_fx):
    with pytest.raises(ValueError):
        ContactRRT(tube_fx.mesh, _start(tube_fx), PlannerConfig(goal=GoalRegion([10 ** 6])))
