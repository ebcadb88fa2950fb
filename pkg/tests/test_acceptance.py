"""Acceptance gate: every headline guarantee of the engine, one test each.

Each test prints a single PASS/FAIL line (outside pytest's capture) so the
run log shows the verdict per criterion at its stated tolerance.
"""
import json
import math
import shutil
import threading
import time

import numpy as np
import pytest
from scipy import ndimage

from eyesim.dataio import (
    MaskArchive,
    export_paired_dataset,
    load_graphs,
    load_landmark_tracks,
    load_mask_archive,
    load_raster_png,
    load_script,
    save_graphs,
    save_landmark_tracks,
    save_mask_archive,
    save_raster_png,
    save_script,
)
from eyesim.geometry import CoordinateMap, SimilarityTransform, angle_diff, fit_similarity, wrap_angle
from eyesim.renderer import CLASS_NAMES, FlowField, LabelRaster
from eyesim.roundtrip import (
    compare_scripts,
    make_mixed_scenario,
    per_class_iou,
    recover_script,
    synth_landmarks,
)
from eyesim.scenegraph import EIGHT_CONNECTED, build_graph
from eyesim.server import SessionManager
from eyesim.simulator import (
    Action,
    AnatomyDelta,
    ScenarioSpec,
    Simulator,
    ToolDelta,
    generate_ood_scenario,
)
from eyesim.state import SimState, ToolState, default_anatomy
from eyesim.tools import ToolClass
from oracle_utils import grid_search_similarity

M = CoordinateMap(128, 128, 1.0)

NUM_SCENARIOS = 20
NUM_FRAMES = 64

TOLERANCES_PX = {"iris_centroid_px": 1.5, "pupil_centroid_px": 1.5, "tip_px": 2.0}
TOLERANCES_DEG = {"orientation_deg": 3.0, "opening_deg": 4.0, "bend_deg": 4.0}


def verdict(capfd, name, ok, detail):
    with capfd.disabled():
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", flush=True)
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def roundtrip_runs():
    """The 20 seeded scenarios: render, recover, re-render; keep everything."""
    sim = Simulator(coord_map=M)
    runs = []
    t0 = time.perf_counter()
    for seed in range(NUM_SCENARIOS):
        script = make_mixed_scenario(seed, NUM_FRAMES)
        _states, rasters = sim.replay(script)
        landmarks = synth_landmarks(script, M)
        recovered = recover_script(rasters, landmarks, M, fps=script.fps)
        metrics = compare_scripts(script, recovered, M)
        _rstates, replayed = sim.replay(recovered)
        min_iou = {}
        for ra, rb in zip(rasters, replayed):
            for cid, iou in per_class_iou(ra, rb).items():
                min_iou[cid] = min(min_iou.get(cid, 1.0), iou)
        runs.append({
            "seed": seed,
            "rasters": rasters,
            "metrics": metrics,
            "min_iou": min_iou,
        })
    elapsed = time.perf_counter() - t0
    return runs, elapsed


def test_round_trip_fidelity(roundtrip_runs, capfd):
    runs, elapsed = roundtrip_runs
    worst = {k: 0.0 for k in list(TOLERANCES_PX) + list(TOLERANCES_DEG)}
    ok = True
    for run in runs:
        for key, tol in {**TOLERANCES_PX, **TOLERANCES_DEG}.items():
            mean = run["metrics"][key]["mean"]
            worst[key] = max(worst[key], mean)
            ok = ok and mean <= tol
    ok = ok and elapsed < 60.0
    detail = (
        f"{NUM_SCENARIOS} scenarios x {NUM_FRAMES} frames in {elapsed:.1f}s; "
        f"worst means: iris {worst['iris_centroid_px']:.2f}px, "
        f"pupil {worst['pupil_centroid_px']:.2f}px, tip {worst['tip_px']:.2f}px, "
        f"orientation {worst['orientation_deg']:.2f} deg, "
        f"opening {worst['opening_deg']:.2f} deg, bend {worst['bend_deg']:.2f} deg "
        f"(limits 1.5/1.5/2.0 px, 3/4/4 deg, <60s)"
    )
    verdict(capfd, "round-trip fidelity", ok, detail)


def test_replay_mask_agreement(roundtrip_runs, capfd):
    runs, _ = roundtrip_runs
    worst = min(min(run["min_iou"].values()) for run in runs)
    ok = worst >= 0.9
    verdict(capfd, "replay mask agreement", ok,
            f"minimum per-class IoU over every frame of every scenario: "
            f"{worst:.4f} (limit 0.90)")


def test_scene_graph_oracle_and_stability(roundtrip_runs, capfd):
    # part 1: naive per-pixel oracle equality on 200 random rasters+flows
    rng = np.random.default_rng(99)
    max_err = 0.0
    for _ in range(200):
        labels = np.zeros((64, 64), dtype=np.uint8)
        for cid in rng.choice([1, 2, 3, 10, 11, 12, 13, 14], size=4, replace=False):
            cx, cy = rng.integers(6, 58, size=2)
            w, h = rng.integers(2, 12, size=2)
            labels[max(0, cy - h):cy + h, max(0, cx - w):cx + w] = cid
        u = rng.normal(size=labels.shape)
        v = rng.normal(size=labels.shape)
        graph = build_graph(LabelRaster(labels), FlowField(u, v))
        for node in graph.nodes:
            lab, _n = ndimage.label(labels == node.class_id, structure=EIGHT_CONNECTED)
            ys, xs = np.nonzero(labels == node.class_id)
            d2 = (xs - node.centroid[0]) ** 2 + (ys - node.centroid[1]) ** 2
            comp = lab == lab[ys[np.argmin(d2)], xs[np.argmin(d2)]]
            cys, cxs = np.nonzero(comp)
            # naive recomputation with plain sums
            cen = (float(sum(cxs)) / len(cxs), float(sum(cys)) / len(cys))
            spread = (
                math.sqrt(sum((x - cen[0]) ** 2 for x in cxs) / len(cxs)),
                math.sqrt(sum((y - cen[1]) ** 2 for y in cys) / len(cys)),
            )
            mf = (float(sum(u[comp])) / comp.sum(), float(sum(v[comp])) / comp.sum())
            max_err = max(
                max_err,
                abs(cen[0] - node.centroid[0]), abs(cen[1] - node.centroid[1]),
                abs(spread[0] - node.spread[0]), abs(spread[1] - node.spread[1]),
                abs(mf[0] - node.mean_flow[0]), abs(mf[1] - node.mean_flow[1]),
            )
    oracle_ok = max_err <= 1e-9

    # part 2: boundary-shift stability on every rendered frame of the
    # 20 scenarios (components >= 100 px, 1-px erosion/dilation)
    runs, _ = roundtrip_runs
    worst_shift = 0.0
    structure = EIGHT_CONNECTED.astype(bool)
    checked = 0
    for run in runs:
        for raster in run["rasters"]:
            labels = raster.labels
            for cid in np.unique(labels):
                if cid == 0:
                    continue
                lab, n = ndimage.label(labels == cid, structure=EIGHT_CONNECTED)
                for comp_id in range(1, n + 1):
                    comp = lab == comp_id
                    count = int(comp.sum())
                    if count < 100:
                        continue
                    ys, xs = np.nonzero(comp)
                    cen = (xs.mean(), ys.mean())
                    spread = (xs.std(), ys.std())
                    for op in (ndimage.binary_erosion, ndimage.binary_dilation):
                        shifted = op(comp, structure=structure)
                        sys_, sxs = np.nonzero(shifted)
                        if sxs.size == 0:
                            continue
                        scen = (sxs.mean(), sys_.mean())
                        sspread = (sxs.std(), sys_.std())
                        worst_shift = max(
                            worst_shift,
                            abs(scen[0] - cen[0]), abs(scen[1] - cen[1]),
                            abs(sspread[0] - spread[0]), abs(sspread[1] - spread[1]),
                        )
                    checked += 1
    stable_ok = worst_shift <= 1.5
    verdict(capfd, "scene-graph oracle equality", oracle_ok and stable_ok,
            f"200 random rasters max attribute error {max_err:.2e} (limit 1e-9); "
            f"boundary-shift worst drift {worst_shift:.3f}px over {checked} "
            f"components (limit 1.5px)")


def fuzz_stream(steps):
    """Deterministic fuzzed transition stream; returns per-step state list."""
    sim = Simulator(coord_map=M)
    rng = np.random.default_rng(2024)
    state = SimState(anatomy=default_anatomy())
    out = [state]
    violations = 0
    for _ in range(steps):
        deltas = []
        present = [t for t in state.tools if t.present]
        if present and rng.random() < 0.85:
            t = present[int(rng.integers(0, len(present)))]
            deltas.append(ToolDelta(
                t.tool_class,
                delta_tip=tuple(rng.uniform(-0.25, 0.25, size=2)),
                delta_orientation=float(rng.uniform(-2, 2)),
                delta_bend=float(rng.uniform(-1.5, 1.5)),
                delta_opening=float(rng.uniform(-2, 2)),
            ))
        elif rng.random() < 0.5:
            cls = ToolClass(int(rng.choice([c.value for c in ToolClass])))
            cur = state.tool(cls)
            if cur is None or not cur.present:
                deltas.append(ToolDelta(cls, spawn=ToolState(
                    cls, tuple(rng.uniform(-0.9, 0.9, size=2)),
                    float(rng.uniform(-math.pi, math.pi)))))
            else:
                deltas.append(ToolDelta(cls, despawn=True))
        ad = AnatomyDelta(
            delta_translation=tuple(rng.uniform(-0.04, 0.04, size=2)),
            delta_yaw=float(rng.uniform(-0.4, 0.4)),
            delta_pitch=float(rng.uniform(-0.4, 0.4)),
        ) if rng.random() < 0.5 else None
        state, _ = sim.transition(state, Action(tuple(deltas), ad),
                                  want_raster=False)
        # closure checks (SimState/ToolState constructors enforce the rest)
        if not (-math.pi / 2 <= state.anatomy.globe_rotation.yaw <= math.pi / 2):
            violations += 1
        for t in state.tools:
            if not t.articulation.in_range:
                violations += 1
            if t.present and not (
                sim.bounds[0] <= t.tip[0] <= sim.bounds[2]
                and sim.bounds[1] <= t.tip[1] <= sim.bounds[3]
            ):
                violations += 1
        out.append(state)
    return out, violations


def test_determinism(tmp_path_factory, capfd):
    ok = True
    details = []

    # ood + replay bitwise across two runs
    s1 = generate_ood_scenario([ToolClass.KERATOME, ToolClass.HYDRO_CANNULA],
                               [0.8, 3.9], "sweep", seed=7, num_frames=16)
    s2 = generate_ood_scenario([ToolClass.KERATOME, ToolClass.HYDRO_CANNULA],
                               [0.8, 3.9], "sweep", seed=7, num_frames=16)
    ood_ok = json.dumps(s1.to_jsonable()) == json.dumps(s2.to_jsonable())
    sim = Simulator(coord_map=M)
    _, r1 = sim.replay(s1)
    _, r2 = sim.replay(s2)
    replay_ok = all(np.array_equal(a.labels, b.labels) for a, b in zip(r1, r2))

    # export bitwise across two runs
    out = tmp_path_factory.mktemp("det") / "ds"
    export_paired_dataset(s1, M, out)
    blobs = {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*"))
             if p.is_file() and p.name != ".export.lock"}
    shutil.rmtree(out)
    export_paired_dataset(s2, M, out)
    export_ok = all((out / rel).read_bytes() == blob for rel, blob in blobs.items())

    # 1e5-step fuzz: two runs bitwise equal, zero invariant violations
    states_a, viol_a = fuzz_stream(100_000)
    states_b, viol_b = fuzz_stream(100_000)
    fuzz_ok = states_a == states_b and viol_a == 0 and viol_b == 0

    ok = ood_ok and replay_ok and export_ok and fuzz_ok
    details = (f"ood bitwise: {ood_ok}; replay bitwise: {replay_ok}; "
               f"export bitwise: {export_ok}; 1e5-step fuzz bitwise: "
               f"{states_a == states_b} with {viol_a} invariant violations")
    verdict(capfd, "determinism", ok, details)


def test_similarity_fit_exactness(capfd):
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(1000):
        k = int(rng.integers(2, 16))
        src = rng.normal(size=(k, 2)) * rng.uniform(1, 50)
        if k == 2 and float(np.hypot(*(src[0] - src[1]))) < 1e-6:
            continue
        true = SimilarityTransform(
            float(rng.uniform(-40, 40)), float(rng.uniform(-40, 40)),
            float(rng.uniform(-math.pi, math.pi)), float(rng.uniform(0.2, 4.0)),
        )
        _xf, rms = fit_similarity(src, true.apply(src))
        worst = max(worst, rms)
    exact_ok = worst < 1e-9

    noisy_worst = 0.0
    for i in range(5):
        src = rng.normal(size=(6, 2)) * 10
        true = SimilarityTransform(
            float(rng.uniform(-10, 10)), float(rng.uniform(-10, 10)),
            float(rng.uniform(-2, 2)), float(rng.uniform(0.5, 2.0)),
        )
        dst = true.apply(src) + rng.normal(scale=0.3, size=(6, 2))
        xf, _rms = fit_similarity(src, dst)
        otx, oty, orot, osc = grid_search_similarity(src, dst)
        noisy_worst = max(
            noisy_worst,
            abs(xf.tx - otx), abs(xf.ty - oty),
            abs(wrap_angle(xf.rot - orot)), abs(xf.scale - osc),
        )
    noisy_ok = noisy_worst < 1e-3
    verdict(capfd, "similarity-fit exactness", exact_ok and noisy_ok,
            f"1000 exact configs worst residual {worst:.2e} (limit 1e-9); "
            f"noisy fits within {noisy_worst:.2e} of grid-search oracle "
            f"(limit 1e-3)")


def test_ood_generation(capfd):
    classes = [ToolClass.KERATOME, ToolClass.RHEXIS_FORCEPS, ToolClass.PHACO,
               ToolClass.HYDRO_CANNULA, ToolClass.VISCO_CANNULA]
    worst_deg = 0.0
    co_ok = True
    for p_i, primitive in enumerate(("approach", "sweep", "circular")):
        for a_i in range(36):
            ang = a_i * 2.0 * math.pi / 36.0
            req = [wrap_angle(ang), wrap_angle(ang + 2.1), wrap_angle(ang + 4.2)]
            tools = [classes[(a_i + p_i + j) % len(classes)] for j in range(3)]
            script = generate_ood_scenario(tools, req, primitive,
                                           seed=a_i * 3 + p_i, num_frames=16)
            anat, first = script.frames[0]
            pupil = anat.pupil_world()
            for target_ang, cls in zip(req, tools):
                tool = next(t for t in first if t.tool_class == cls)
                measured = math.atan2(pupil.cy - tool.tip[1], pupil.cx - tool.tip[0])
                worst_deg = max(worst_deg,
                                abs(math.degrees(angle_diff(measured, target_ang))))
            for _, ts in script.frames:
                co_ok = co_ok and len(ts) == 3 and all(t.present for t in ts)
    angle_ok = worst_deg <= 1.0
    verdict(capfd, "OOD generation", angle_ok and co_ok,
            f"36 angles x 3 primitives, 3 co-occurring tools each: worst entry-"
            f"direction error {worst_deg:.3f} deg (limit 1 deg); all tools present "
            f"in every frame: {co_ok}")


def test_export_format(tmp_path_factory, capfd):
    tmp = tmp_path_factory.mktemp("fmt")
    script31 = generate_ood_scenario([ToolClass.PHACO], [1.1], "approach",
                                     seed=13, num_frames=31)
    windows = export_paired_dataset(script31, M, tmp / "ds")
    windows_ok = (
        len(windows) == 2
        and windows[0].frame_indices == tuple(range(16))
        and windows[1].frame_indices == tuple(range(15, 31))
        and windows[1].first_frame_overlap
    )

    # bitwise save -> load -> save identity for every artifact format
    sim = Simulator(coord_map=M)
    states, rasters = sim.replay(script31)
    persist_ok = True

    save_raster_png(tmp / "r.png", rasters[0])
    save_raster_png(tmp / "r_again.png", load_raster_png(tmp / "r.png"))
    persist_ok &= (tmp / "r.png").read_bytes() == (tmp / "r_again.png").read_bytes()

    save_script(tmp / "s.jsonl", script31)
    save_script(tmp / "s_again.jsonl", load_script(tmp / "s.jsonl"))
    persist_ok &= (tmp / "s.jsonl").read_bytes() == (tmp / "s_again.jsonl").read_bytes()

    zeros = np.zeros(rasters[0].labels.shape)
    graphs = [build_graph(rasters[t], FlowField(zeros, zeros), frame_index=t)
              for t in range(3)]
    save_graphs(tmp / "g.jsonl", graphs)
    save_graphs(tmp / "g_again.jsonl", load_graphs(tmp / "g.jsonl"))
    persist_ok &= (tmp / "g.jsonl").read_bytes() == (tmp / "g_again.jsonl").read_bytes()

    archive = MaskArchive("v", 4.0, (128, 128), dict(CLASS_NAMES),
                          tuple(rasters[:4]))
    save_mask_archive(tmp / "arch", archive)
    save_mask_archive(tmp / "arch2", load_mask_archive(tmp / "arch"))
    for p in sorted((tmp / "arch").iterdir()):
        persist_ok &= p.read_bytes() == (tmp / "arch2" / p.name).read_bytes()

    tracks = [np.array([[1.0, 2.0], [3.0, 4.0]])] * 3
    save_landmark_tracks(tmp / "t.json", tracks)
    save_landmark_tracks(tmp / "t2.json", load_landmark_tracks(tmp / "t.json"))
    persist_ok &= (tmp / "t.json").read_bytes() == (tmp / "t2.json").read_bytes()

    verdict(capfd, "export format", windows_ok and bool(persist_ok),
            f"31-frame script -> {len(windows)} overlapping 16-frame windows "
            f"(expected 2); save/load bitwise identity for raster/script/"
            f"graphs/archive/tracks: {bool(persist_ok)}")


def test_session_service(capfd):
    mgr = SessionManager(coord_map=M)
    spec = ScenarioSpec(initial_state=SimState(
        anatomy=default_anatomy(),
        tools=(ToolState(ToolClass.KERATOME, (0.3, 0.1), 3.0),),
    ))
    sids = [mgr.create(spec) for _ in range(8)]

    total_steps = 1000
    failed_attempts = [0]
    lock = threading.Lock()

    def worker(wid):
        rng = np.random.default_rng(wid)
        for i in range(total_steps // 8):
            sid = sids[int(rng.integers(0, 8))]
            if rng.random() < 0.05:  # deliberately bad action must not commit
                before = mgr.get(sid).state.frame_index
                try:
                    mgr.step(sid, Action(tool_deltas=(
                        ToolDelta(ToolClass.PHACO, delta_tip=(0.1, 0.0)),)))
                except Exception:
                    pass
                with lock:
                    failed_attempts[0] += 1
            else:
                mgr.step(sid, Action(tool_deltas=(ToolDelta(
                    ToolClass.KERATOME,
                    delta_tip=(float(rng.uniform(-0.01, 0.01)),
                               float(rng.uniform(-0.01, 0.01)))),)))

    threads = [threading.Thread(target=worker, args=(w,)) for w in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()

    replay_ok = True
    atom_ok = True
    for sid in sids:
        s = mgr.get(sid)
        replay_ok &= mgr.replay_log(s.spec, s.log)[-1] == s.state
        atom_ok &= s.state.frame_index == len(s.log)
    verdict(capfd, "session service", replay_ok and atom_ok,
            f"8 concurrent sessions, {total_steps} interleaved steps "
            f"({failed_attempts[0]} deliberately failing): log-replay identity "
            f"{replay_ok}; frame_index == committed log length {atom_ok}")
