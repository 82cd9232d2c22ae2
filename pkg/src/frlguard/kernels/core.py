"""Hot numeric kernels: cart-pole physics, MLP policy math, episode rollouts,
and the Weiszfeld geometric-median iteration.

All functions are written in nopython-compatible style (scalar loops over
flat float64 arrays) and are wrapped by numba's njit unless disabled via
FRLGUARD_NO_NUMBA (see jit.py).

Parameter vector layout for an MLP with widths [w0, w1, ..., wL]:
for each layer l: W_l row-major with shape (w_l, w_{l+1}), then bias b_l;
for a gaussian head, the per-dimension log-std vector sits at the tail.

Activation scratch layout: activations of all layers concatenated,
segment l starting at sum(widths[:l]).
"""

import math

import numpy as np

from .jit import kernel

# mode codes for rollouts
MODE_SAMPLE = 0
MODE_GREEDY = 1
MODE_RANDOM = 2

# head codes
HEAD_CATEGORICAL = 0
HEAD_GAUSSIAN = 1

# hidden activation codes
ACT_RELU = 0
ACT_TANH = 1

# continuous test-time vote codes
VOTE_GEOMEDIAN = 0
VOTE_FEDAVG = 1
VOTE_TRIMMED = 2


@kernel
def cartpole_step(x, x_dot, theta, theta_dot, force,
                  gravity, masscart, masspole, half_len, dt):
    """One integration step of the classic cart-pole ODEs.

    Accelerations are evaluated at the current state; positions advance
    with the current velocities, then velocities advance with the
    accelerations (the convention the frozen step examples assume).
    """
    total_mass = masscart + masspole
    polemass_length = masspole * half_len
    costh = math.cos(theta)
    sinth = math.sin(theta)
    temp = (force + polemass_length * theta_dot * theta_dot * sinth) / total_mass
    theta_acc = (gravity * sinth - costh * temp) / (
        half_len * (4.0 / 3.0 - masspole * costh * costh / total_mass))
    x_acc = temp - polemass_length * theta_acc * costh / total_mass
    x2 = x + dt * x_dot
    theta2 = theta + dt * theta_dot
    x_dot2 = x_dot + dt * x_acc
    theta_dot2 = theta_dot + dt * theta_acc
    return x2, x_dot2, theta2, theta_dot2


@kernel
def mlp_forward(params, widths, act_code, out_tanh, x, acts):
    """Forward pass; fills `acts` and returns the offset of the output
    segment. The output layer is tanh-activated unless out_tanh == 0
    (raw output logits)."""
    n_layers = widths.shape[0] - 1
    for i in range(widths[0]):
        acts[i] = x[i]
    po = 0
    ao_in = 0
    for l in range(n_layers):
        fi = widths[l]
        fo = widths[l + 1]
        ao_out = ao_in + fi
        for j in range(fo):
            s = params[po + fi * fo + j]
            for i in range(fi):
                s += acts[ao_in + i] * params[po + i * fo + j]
            if l == n_layers - 1:
                acts[ao_out + j] = math.tanh(s) if out_tanh != 0 else s
            elif act_code == ACT_TANH:
                acts[ao_out + j] = math.tanh(s)
            else:
                acts[ao_out + j] = s if s > 0.0 else 0.0
        po += fi * fo + fo
        ao_in = ao_out
    return ao_in


@kernel
def logprob_backward(params, widths, act_code, head_code, out_tanh, lo, hi,
                     a_disc, a_cont, acts, delta_a, delta_b, grad, scale):
    """Accumulate scale * d(log pi(a|s))/d(params) into `grad`.

    Requires `acts` filled by mlp_forward for the same (params, state).
    delta_a / delta_b are scratch vectors of length >= max(widths).
    """
    n_layers = widths.shape[0] - 1
    out_dim = widths[n_layers]
    ao = 0
    for l in range(n_layers):
        ao += widths[l]
    core_dim = 0
    for l in range(n_layers):
        core_dim += widths[l] * widths[l + 1] + widths[l + 1]

    if head_code == HEAD_CATEGORICAL:
        zmax = acts[ao]
        for j in range(1, out_dim):
            if acts[ao + j] > zmax:
                zmax = acts[ao + j]
        psum = 0.0
        for j in range(out_dim):
            e = math.exp(acts[ao + j] - zmax)
            delta_b[j] = e
            psum += e
        for j in range(out_dim):
            z = acts[ao + j]
            p = delta_b[j] / psum
            ind = 1.0 if j == a_disc else 0.0
            if out_tanh != 0:
                delta_a[j] = (ind - p) * (1.0 - z * z)
            else:
                delta_a[j] = ind - p
    else:
        c1 = 0.5 * (hi - lo)
        c0 = 0.5 * (hi + lo)
        for j in range(out_dim):
            z = acts[ao + j]
            mean = c0 + c1 * z
            sd = math.exp(params[core_dim + j])
            diff = a_cont[j] - mean
            delta_a[j] = diff / (sd * sd) * c1 * (1.0 - z * z)
            grad[core_dim + j] += scale * (diff * diff / (sd * sd) - 1.0)

    ao_out = ao
    for l in range(n_layers - 1, -1, -1):
        fi = widths[l]
        fo = widths[l + 1]
        ao_in = ao_out - fi
        po = 0
        for t in range(l):
            po += widths[t] * widths[t + 1] + widths[t + 1]
        for j in range(fo):
            dj = delta_a[j]
            grad[po + fi * fo + j] += scale * dj
            for i in range(fi):
                grad[po + i * fo + j] += scale * dj * acts[ao_in + i]
        if l > 0:
            for i in range(fi):
                s = 0.0
                for j in range(fo):
                    s += params[po + i * fo + j] * delta_a[j]
                a = acts[ao_in + i]
                if act_code == ACT_RELU:
                    if a <= 0.0:
                        s = 0.0
                else:
                    s = s * (1.0 - a * a)
                delta_b[i] = s
            for i in range(fi):
                delta_a[i] = delta_b[i]
        ao_out = ao_in


@kernel
def run_episode(params, widths, act_code, head_code, out_tanh, lo, hi,
                gravity, masscart, masspole, half_len, force_mag, dt,
                x_limit, theta_limit, cap,
                gamma, noise_std,
                reset_draws, act_uniforms, act_normals, noise_draws,
                mode, collect_grad,
                states, actions, rewards, grad, acts, delta_a, delta_b):
    """Simulate one episode; optionally accumulate sum_h dlogpi into `grad`.

    reset_draws: the 4 initial state components (already uniform in
    [-0.05, 0.05]). act_uniforms: (H, u) uniforms in [0,1) used for
    categorical sampling and for uniform-random actions. act_normals:
    (H, adim) standard normals for gaussian sampling. noise_draws: (H,)
    standard normals scaled by noise_std into the per-step reward.

    Returns (discounted_return, total_reward, steps). The discount
    exponent starts at 1 for the first step.
    """
    horizon = rewards.shape[0]
    limit = horizon if horizon < cap else cap
    n_layers = widths.shape[0] - 1
    out_dim = widths[n_layers]
    d = grad.shape[0]
    for i in range(d):
        grad[i] = 0.0
    core_dim = 0
    for l in range(n_layers):
        core_dim += widths[l] * widths[l + 1] + widths[l + 1]

    x = reset_draws[0]
    x_dot = reset_draws[1]
    theta = reset_draws[2]
    theta_dot = reset_draws[3]

    disc_return = 0.0
    total = 0.0
    gpow = gamma
    steps = 0
    for t in range(limit):
        states[t, 0] = x
        states[t, 1] = x_dot
        states[t, 2] = theta
        states[t, 3] = theta_dot
        ao = mlp_forward(params, widths, act_code, out_tanh, states[t], acts)

        a_disc = 0
        if head_code == HEAD_CATEGORICAL:
            if mode == MODE_GREEDY:
                best = acts[ao]
                for j in range(1, out_dim):
                    if acts[ao + j] > best:
                        best = acts[ao + j]
                        a_disc = j
            elif mode == MODE_RANDOM:
                a_disc = int(act_uniforms[t, 0] * out_dim)
                if a_disc >= out_dim:
                    a_disc = out_dim - 1
            else:
                zmax = acts[ao]
                for j in range(1, out_dim):
                    if acts[ao + j] > zmax:
                        zmax = acts[ao + j]
                psum = 0.0
                for j in range(out_dim):
                    e = math.exp(acts[ao + j] - zmax)
                    delta_b[j] = e
                    psum += e
                u = act_uniforms[t, 0] * psum
                cum = 0.0
                a_disc = out_dim - 1
                for j in range(out_dim):
                    cum += delta_b[j]
                    if u < cum:
                        a_disc = j
                        break
            actions[t, 0] = float(a_disc)
            force = force_mag if a_disc == 1 else -force_mag
        else:
            c1 = 0.5 * (hi - lo)
            c0 = 0.5 * (hi + lo)
            for j in range(out_dim):
                if mode == MODE_RANDOM:
                    a = lo + act_uniforms[t, j] * (hi - lo)
                else:
                    a = c0 + c1 * acts[ao + j]
                    if mode == MODE_SAMPLE:
                        sd = math.exp(params[core_dim + j])
                        a += sd * act_normals[t, j]
                    if a < lo:
                        a = lo
                    elif a > hi:
                        a = hi
                actions[t, j] = a
            force = actions[t, 0] * force_mag

        if collect_grad:
            logprob_backward(params, widths, act_code, head_code, out_tanh,
                             lo, hi, a_disc, actions[t], acts, delta_a,
                             delta_b, grad, 1.0)

        x, x_dot, theta, theta_dot = cartpole_step(
            x, x_dot, theta, theta_dot, force,
            gravity, masscart, masspole, half_len, dt)

        reward = 1.0
        if noise_std > 0.0:
            reward += noise_std * noise_draws[t]
        rewards[t] = reward
        disc_return += gpow * reward
        gpow *= gamma
        total += reward
        steps = t + 1

        if theta > theta_limit or theta < -theta_limit:
            break
        if x > x_limit or x < -x_limit:
            break
    return disc_return, total, steps


@kernel
def geom_median(points, eps, max_iters):
    """Weiszfeld iteration started from the coordinate-wise mean.

    Stops when successive iterates move less than eps. An iterate landing
    within eps/10 of a data point triggers the subgradient optimality test
    at that point; a coincident non-optimal point is handled with the
    damped (Vardi-Zhang) step.
    """
    n, d = points.shape
    y = np.zeros(d)
    for k in range(n):
        for j in range(d):
            y[j] += points[k, j]
    for j in range(d):
        y[j] /= n

    num = np.empty(d)
    r_vec = np.empty(d)
    y_new = np.empty(d)
    for _ in range(max_iters):
        for j in range(d):
            num[j] = 0.0
        den = 0.0
        coincident = 0
        dmin = 1e300
        kmin = 0
        for k in range(n):
            dist = 0.0
            for j in range(d):
                diff = points[k, j] - y[j]
                dist += diff * diff
            dist = math.sqrt(dist)
            if dist < dmin:
                dmin = dist
                kmin = k
            if dist < 1e-12:
                coincident += 1
            else:
                w = 1.0 / dist
                den += w
                for j in range(d):
                    num[j] += points[k, j] * w

        if dmin < 0.1 * eps or coincident > 0:
            # optimality test at the nearest data point
            mult = 0
            for j in range(d):
                r_vec[j] = 0.0
            for k in range(n):
                dist = 0.0
                for j in range(d):
                    diff = points[k, j] - points[kmin, j]
                    dist += diff * diff
                dist = math.sqrt(dist)
                if dist < 1e-12:
                    mult += 1
                else:
                    for j in range(d):
                        r_vec[j] += (points[k, j] - points[kmin, j]) / dist
            rnorm = 0.0
            for j in range(d):
                rnorm += r_vec[j] * r_vec[j]
            rnorm = math.sqrt(rnorm)
            if rnorm <= mult:
                for j in range(d):
                    y[j] = points[kmin, j]
                return y

        if den == 0.0:
            # every point coincides with y
            return y

        if coincident > 0:
            # damped step away from a non-optimal coincident point
            rnorm = 0.0
            for j in range(d):
                r_vec[j] = num[j] - den * y[j]
                rnorm += r_vec[j] * r_vec[j]
            rnorm = math.sqrt(rnorm)
            frac = coincident / rnorm if rnorm > 0.0 else 1.0
            if frac > 1.0:
                frac = 1.0
            for j in range(d):
                t_j = num[j] / den
                y_new[j] = (1.0 - frac) * t_j + frac * y[j]
        else:
            for j in range(d):
                y_new[j] = num[j] / den

        move = 0.0
        for j in range(d):
            diff = y_new[j] - y[j]
            move += diff * diff
            y[j] = y_new[j]
        if math.sqrt(move) < eps:
            break
    return y


@kernel
def aggregate_actions(action_mat, vote_mode, trim_c, gm_eps, gm_iters, out):
    """Combine K continuous action vectors into one (test-time vote)."""
    n, d = action_mat.shape
    if vote_mode == VOTE_GEOMEDIAN:
        med = geom_median(action_mat, gm_eps, gm_iters)
        for j in range(d):
            out[j] = med[j]
    elif vote_mode == VOTE_FEDAVG:
        for j in range(d):
            s = 0.0
            for k in range(n):
                s += action_mat[k, j]
            out[j] = s / n
    else:
        for j in range(d):
            col = np.empty(n)
            for k in range(n):
                col[k] = action_mat[k, j]
            col.sort()
            s = 0.0
            for k in range(trim_c, n - trim_c):
                s += col[k]
            out[j] = s / (n - 2 * trim_c)


@kernel
def run_episode_ensemble(params_stack, widths, act_code, head_code, out_tanh,
                         lo, hi,
                         gravity, masscart, masspole, half_len, force_mag, dt,
                         x_limit, theta_limit, cap, noise_std,
                         reset_draws, noise_draws,
                         vote_mode, trim_c, gm_eps, gm_iters,
                         acts, action_mat, agg_action, x_buf):
    """One episode driven by the ensemble's per-step action vote.

    Discrete: per-policy greedy action, majority vote, ties to the smaller
    action index. Continuous: per-policy mean action combined per
    vote_mode. Returns (total_reward, steps).
    """
    n_pol = params_stack.shape[0]
    horizon = noise_draws.shape[0]
    limit = horizon if horizon < cap else cap
    n_layers = widths.shape[0] - 1
    out_dim = widths[n_layers]

    x = reset_draws[0]
    x_dot = reset_draws[1]
    theta = reset_draws[2]
    theta_dot = reset_draws[3]

    total = 0.0
    steps = 0
    counts = np.empty(out_dim, dtype=np.int64)
    for t in range(limit):
        x_buf[0] = x
        x_buf[1] = x_dot
        x_buf[2] = theta
        x_buf[3] = theta_dot

        if head_code == HEAD_CATEGORICAL:
            for j in range(out_dim):
                counts[j] = 0
            for k in range(n_pol):
                ao = mlp_forward(params_stack[k], widths, act_code, out_tanh,
                                 x_buf, acts)
                best = acts[ao]
                a = 0
                for j in range(1, out_dim):
                    if acts[ao + j] > best:
                        best = acts[ao + j]
                        a = j
                counts[a] += 1
            winner = 0
            for j in range(1, out_dim):
                if counts[j] > counts[winner]:
                    winner = j
            force = force_mag if winner == 1 else -force_mag
        else:
            c1 = 0.5 * (hi - lo)
            c0 = 0.5 * (hi + lo)
            for k in range(n_pol):
                ao = mlp_forward(params_stack[k], widths, act_code, out_tanh,
                                 x_buf, acts)
                for j in range(out_dim):
                    a = c0 + c1 * acts[ao + j]
                    if a < lo:
                        a = lo
                    elif a > hi:
                        a = hi
                    action_mat[k, j] = a
            aggregate_actions(action_mat, vote_mode, trim_c, gm_eps, gm_iters,
                              agg_action)
            a0 = agg_action[0]
            if a0 < lo:
                a0 = lo
            elif a0 > hi:
                a0 = hi
            force = a0 * force_mag

        x, x_dot, theta, theta_dot = cartpole_step(
            x, x_dot, theta, theta_dot, force,
            gravity, masscart, masspole, half_len, dt)

        reward = 1.0
        if noise_std > 0.0:
            reward += noise_std * noise_draws[t]
        total += reward
        steps = t + 1

        if theta > theta_limit or theta < -theta_limit:
            break
        if x > x_limit or x < -x_limit:
            break
    return total, steps
