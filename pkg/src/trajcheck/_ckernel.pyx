# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled checker kernel.

Mirrors ``_pykernel.run`` operation for operation so both backends produce
bit-identical outputs. Parameter layout is documented in ``_layout.py``.
"""
from libc.math cimport ceil, fabs, INFINITY

cdef enum:
    N_KINDS = 4
    K_MIN_BRAKE = 0
    K_MAX_ACCEL = 1
    K_MAX_LAT_SPEED = 2
    K_MIN_GAP = 3


cdef struct Env:
    double t, x_min, x_max, y_min, y_max, v_lo, v_hi


cdef struct Feats:
    int idx[5]
    double gap, d_min, required, lat_toward


cdef struct Check:
    double bound, actual, slack
    int unrec


cdef inline double clamp(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline int lane_of(double y, double n_lanes, double width) nogil:
    if not (0.0 <= y and y <= n_lanes * width):
        return -1
    if y == 0.0:
        return 0
    cdef int lane = <int>ceil(y / width) - 1
    return lane if lane > 0 else 0


cdef inline double safe_gap(double v_rear, double v_front, double rho, double a_accel,
                            double brake_rear_min, double brake_front_max) nogil:
    cdef double v_resp = v_rear + rho * a_accel
    cdef double d = (v_rear * rho + 0.5 * a_accel * rho * rho
                     + v_resp * v_resp / (2.0 * brake_rear_min)
                     - v_front * v_front / (2.0 * brake_front_max))
    return d if d > 0.0 else 0.0


cdef inline double braking_needed(double gap, double v_rear, double v_front, double rho,
                                  double a_accel, double brake_front_max) nogil:
    cdef double v_resp = v_rear + rho * a_accel
    cdef double denom = 2.0 * (gap - v_rear * rho - 0.5 * a_accel * rho * rho
                               + v_front * v_front / (2.0 * brake_front_max))
    if denom <= 0.0:
        return INFINITY
    return v_resp * v_resp / denom


cdef inline Env envelope(double x, double y, double v0, double v_lat, double dt,
                         const double[::1] p) nogil:
    cdef Env e
    cdef double v_min = p[12], v_max = p[13], a_acc = p[16], a_brk = p[17]
    cdef double t_sat, dx_min, dx_max
    v0 = clamp(v0, v_min, v_max)
    if a_acc > 0.0 and v0 < v_max:
        t_sat = (v_max - v0) / a_acc
        if dt <= t_sat:
            dx_max = v0 * dt + 0.5 * a_acc * dt * dt
            e.v_hi = v0 + a_acc * dt
        else:
            dx_max = v0 * t_sat + 0.5 * a_acc * t_sat * t_sat + v_max * (dt - t_sat)
            e.v_hi = v_max
    else:
        dx_max = v0 * dt
        e.v_hi = v0
    if v0 > v_min:
        t_sat = (v0 - v_min) / a_brk
        if dt <= t_sat:
            dx_min = v0 * dt - 0.5 * a_brk * dt * dt
            e.v_lo = v0 - a_brk * dt
        else:
            dx_min = v0 * t_sat - 0.5 * a_brk * t_sat * t_sat + v_min * (dt - t_sat)
            e.v_lo = v_min
    else:
        dx_min = v0 * dt
        e.v_lo = v0
    e.t = dt
    e.x_min = x + dx_min
    e.x_max = x + dx_max
    if dt == 0.0:
        e.y_min = y
        e.y_max = y
    else:
        e.y_min = y + p[14] * dt
        e.y_max = y + p[15] * dt
    return e


cdef inline Env nominal(double x, double y, double v_long, double v_lat, double dt,
                        const double[::1] p) nogil:
    cdef Env wc = envelope(x, y, v_long, v_lat, dt, p)
    cdef Env e
    cdef double v = clamp(v_long, p[12], p[13])
    cdef double vl = clamp(v_lat, p[14], p[15])
    e.t = dt
    e.x_min = clamp(x + v * dt, wc.x_min, wc.x_max)
    e.x_max = e.x_min
    e.y_min = clamp(y + vl * dt, wc.y_min, wc.y_max)
    e.y_max = e.y_min
    e.v_lo = v
    e.v_hi = v
    return e


cdef inline int zone(double gap, double threshold, double factor) nogil:
    if gap < threshold:
        return 2
    if gap < factor * threshold:
        return 1
    return 0


cdef inline Feats features(const double[::1] pt, Env env, const double[::1] ob,
                           const double[::1] p) nogil:
    # pt: t x y heading v_long v_lat a_long a_lat; ob: x y heading v_long v_lat length width
    cdef Feats f
    cdef double t = env.t
    cdef double n_lanes = p[0], lane_w = p[1]
    cdef double half_ego_len = 0.5 * p[2], half_obs_len = 0.5 * ob[5]
    cdef double half_ego_w = 0.5 * p[3], half_obs_w = 0.5 * ob[6]
    cdef double ego_x = pt[1], ego_y = pt[2], ego_v = pt[4], ego_vlat = pt[5]
    cdef double x_nom = clamp(ob[0] + ob[3] * t, env.x_min, env.x_max)
    cdef double y_nom = clamp(ob[1] + ob[4] * t, env.y_min, env.y_max)
    cdef int ego_lane = lane_of(ego_y, n_lanes, lane_w)
    cdef int obs_lane = lane_of(y_nom, n_lanes, lane_w)
    cdef int rel_lane, relation, threat
    cdef double dx, front_gap, rear_gap, gap
    cdef double ego_lo, ego_hi, obs_lo, obs_hi, lat_gap, side, closing, drift, d_lat
    cdef double lane_lo, lane_hi

    if ego_lane < 0 or obs_lane < 0:
        rel_lane = 3
    elif obs_lane == ego_lane:
        rel_lane = 0
    elif obs_lane == ego_lane + 1:
        rel_lane = 1
    elif obs_lane == ego_lane - 1:
        rel_lane = 2
    else:
        rel_lane = 3

    dx = x_nom - ego_x
    if fabs(dx) < half_ego_len + half_obs_len:
        relation = 2
    elif dx > 0.0:
        relation = 0
    else:
        relation = 1

    front_gap = env.x_min - half_obs_len - (ego_x + half_ego_len)
    if front_gap >= 0.0:
        gap = front_gap
    else:
        rear_gap = (ego_x - half_ego_len) - (env.x_max + half_obs_len)
        gap = rear_gap if rear_gap >= 0.0 else 0.0

    if relation == 1:
        f.d_min = safe_gap(env.v_hi, ego_v, p[19], p[16], p[18], p[11])
        f.required = 0.0
    else:
        f.d_min = safe_gap(ego_v, env.v_lo, p[8], p[9], p[10], p[17])
        if relation == 2 or gap <= 0.0:
            f.required = INFINITY
        else:
            f.required = braking_needed(gap, ego_v, env.v_lo, p[8], p[9], p[17])
    f.gap = gap

    ego_lo = ego_y - half_ego_w
    ego_hi = ego_y + half_ego_w
    obs_lo = env.y_min - half_obs_w
    obs_hi = env.y_max + half_obs_w
    lat_gap = obs_lo - ego_hi
    if ego_lo - obs_hi > lat_gap:
        lat_gap = ego_lo - obs_hi
    if lat_gap < 0.0:
        lat_gap = 0.0
    side = 1.0 if y_nom > ego_y else -1.0
    f.lat_toward = ego_vlat * side
    closing = f.lat_toward - ob[4] * side
    drift = -p[14] if side > 0.0 else p[15]
    d_lat = p[5] + p[8] * (closing if closing > 0.0 else 0.0) + p[8] * (drift if drift > 0.0 else 0.0)

    threat = 0
    if rel_lane != 0 and ego_lane >= 0:
        lane_lo = ego_lane * lane_w
        lane_hi = (ego_lane + 1) * lane_w
        if y_nom + half_obs_w > lane_lo and y_nom - half_obs_w < lane_hi:
            threat = 2
        elif obs_hi > lane_lo and obs_lo < lane_hi:
            threat = 1

    f.idx[0] = rel_lane
    f.idx[1] = relation
    f.idx[2] = zone(gap, f.d_min, p[4])
    f.idx[3] = zone(lat_gap, d_lat, p[4])
    f.idx[4] = threat
    return f


cdef inline Check check_kind(int kind, Feats* f, const double[::1] pt,
                             const double[::1] p) nogil:
    cdef Check c
    c.unrec = 0
    if kind == K_MIN_BRAKE:
        c.actual = -pt[6]
        if f.required <= 0.0:
            c.bound = 0.0
            c.slack = INFINITY
        elif f.required > p[11]:
            c.bound = p[11]
            c.slack = -INFINITY
            c.unrec = 1
        else:
            c.bound = f.required
            c.slack = c.actual - f.required
    elif kind == K_MAX_ACCEL:
        c.bound = p[6]
        c.actual = pt[6]
        c.slack = p[6] - pt[6]
    elif kind == K_MAX_LAT_SPEED:
        c.bound = p[7]
        c.actual = f.lat_toward
        c.slack = p[7] - f.lat_toward
    else:
        c.bound = f.d_min
        c.actual = f.gap
        c.slack = f.gap - f.d_min
    return c


cdef inline int descend(int* idx, const int[::1] node_var, const int[::1] node_start,
                        const int[::1] children, int root) nogil:
    cdef int ref = root
    while ref >= 0:
        ref = children[node_start[ref] + idx[node_var[ref]]]
    return ~ref


def run(const double[:, ::1] points, const double[:, ::1] obstacles, const double[::1] params,
        const int[::1] node_var, const int[::1] node_start, const int[::1] children,
        const int[::1] leaf_hard, const int[::1] leaf_adv, int root,
        double[:, :, ::1] hard_f, int[:, :, ::1] hard_i,
        int[:, :, :, ::1] adv_i, double[:, :, :, ::1] adv_f):
    cdef Py_ssize_t n_pts = points.shape[0], n_obs = obstacles.shape[0]
    cdef Py_ssize_t i, j
    cdef int k, bit, leaf_wc, leaf_nom, hard_mask, adv_mask
    cdef Env env_wc, env_nom
    cdef Feats wc, nom
    cdef Check c
    with nogil:
        for i in range(n_pts):
            for j in range(n_obs):
                env_wc = envelope(obstacles[j, 0], obstacles[j, 1], obstacles[j, 3],
                                  obstacles[j, 4], points[i, 0], params)
                wc = features(points[i], env_wc, obstacles[j], params)
                env_nom = nominal(obstacles[j, 0], obstacles[j, 1], obstacles[j, 3],
                                  obstacles[j, 4], points[i, 0], params)
                nom = features(points[i], env_nom, obstacles[j], params)
                leaf_wc = descend(wc.idx, node_var, node_start, children, root)
                leaf_nom = descend(nom.idx, node_var, node_start, children, root)
                hard_mask = leaf_hard[leaf_nom]
                adv_mask = leaf_hard[leaf_wc] | leaf_adv[leaf_wc]
                for k in range(N_KINDS):
                    bit = 1 << k
                    if hard_mask & bit:
                        c = check_kind(k, &nom, points[i], params)
                        if c.slack < hard_f[i, k, 2]:
                            hard_f[i, k, 0] = c.bound
                            hard_f[i, k, 1] = c.actual
                            hard_f[i, k, 2] = c.slack
                            hard_i[i, k, 0] = <int>j
                            hard_i[i, k, 1] = leaf_nom
                            hard_i[i, k, 2] = c.unrec
                    if adv_mask & bit and adv_i[j, leaf_wc, k, 0] < 0:
                        c = check_kind(k, &wc, points[i], params)
                        if c.slack < 0.0:
                            adv_i[j, leaf_wc, k, 0] = <int>i
                            adv_i[j, leaf_wc, k, 1] = c.unrec
                            adv_f[j, leaf_wc, k, 0] = c.bound
                            adv_f[j, leaf_wc, k, 1] = c.actual
