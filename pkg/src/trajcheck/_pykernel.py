"""Pure-Python checker kernel, built from the reference kinematics and monitor.

Same contract as the compiled ``_ckernel.run``; see ``kernel.py`` for the
array layouts. The compiled kernel must reproduce these results exactly.
"""
from __future__ import annotations

from ._layout import unpack_params
from .constraints import check_kind
from .kinematics import nominal_envelope, predict_envelope
from .monitor import pair_features
from .world import ObstacleState, TrajectoryPoint

N_KINDS = 4


def _leaf(indices, node_var, node_start, children, root):
    ref = root
    while ref >= 0:
        ref = int(children[node_start[ref] + indices[node_var[ref]]])
    return ~ref


def run(points, obstacles, params, node_var, node_start, children, leaf_hard,
        leaf_adv, root, hard_f, hard_i, adv_i, adv_f):
    cfg = unpack_params(params)
    road, guest = cfg.road, cfg.guest
    node_var = node_var.tolist()
    node_start = node_start.tolist()
    children = children.tolist()
    leaf_hard = leaf_hard.tolist()
    leaf_adv = leaf_adv.tolist()
    obs_list = [ObstacleState(j, *row) for j, row in enumerate(obstacles.tolist())]
    for i, row in enumerate(points.tolist()):
        pt = TrajectoryPoint(*row)
        for j, obs in enumerate(obs_list):
            env = predict_envelope(obs, guest, pt.t)
            wc = pair_features(pt, env, obs, road, guest, cfg)
            nom = pair_features(pt, nominal_envelope(obs, guest, pt.t), obs, road, guest, cfg)
            leaf_wc = _leaf(wc.indices, node_var, node_start, children, root)
            leaf_nom = _leaf(nom.indices, node_var, node_start, children, root)
            hard_mask = leaf_hard[leaf_nom]
            adv_mask = leaf_hard[leaf_wc] | leaf_adv[leaf_wc]
            for k in range(N_KINDS):
                bit = 1 << k
                if hard_mask & bit:
                    c = check_kind(k, nom, pt, cfg)
                    if c.slack < hard_f[i, k, 2]:
                        hard_f[i, k, 0] = c.bound
                        hard_f[i, k, 1] = c.actual
                        hard_f[i, k, 2] = c.slack
                        hard_i[i, k, 0] = j
                        hard_i[i, k, 1] = leaf_nom
                        hard_i[i, k, 2] = c.unrecoverable
                if adv_mask & bit and adv_i[j, leaf_wc, k, 0] < 0:
                    c = check_kind(k, wc, pt, cfg)
                    if c.slack < 0.0:
                        adv_i[j, leaf_wc, k, 0] = i
                        adv_i[j, leaf_wc, k, 1] = c.unrecoverable
                        adv_f[j, leaf_wc, k, 0] = c.bound
                        adv_f[j, leaf_wc, k, 1] = c.actual
