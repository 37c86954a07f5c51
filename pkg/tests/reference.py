"""Independent oracle implementations used only by the test suite.

Everything here is written with plain loops and scipy's generic optimizer,
deliberately avoiding the package's own log-space machinery, so agreement
between the two paths is meaningful evidence of correctness.
"""

import math

import numpy as np
from scipy.optimize import minimize

from mlcirt import Parameterization


def sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def item_prob(params, spec, v, j):
    if spec.parameterization is Parameterization.LC:
        return float(params.lc_success[v, j])
    d = spec.item_bank.dim_of[j]
    return sigmoid(params.discrimination[j]
                   * (params.abilities[v, d] - params.difficulty[j]))


def softmax(logits):
    m = max(logits)
    e = [math.exp(v - m) for v in logits]
    s = sum(e)
    return [v / s for v in e]


def single_level_loglik(data, params, spec):
    """Manifest-distribution log-likelihood for k_U = 1 data, by plain loops."""
    assert spec.n_types == 1
    total = 0.0
    for school in data.schools:
        for i in range(school.n_students):
            x = school.student_covariates[i]
            logits = [0.0] + [
                float(params.class_intercepts[0, v - 1]
                      + np.dot(params.class_slopes[v - 1], x))
                for v in range(1, spec.n_classes)]
            weights = softmax(logits)
            mix = 0.0
            for v in range(spec.n_classes):
                lik = 1.0
                for j in range(spec.item_bank.n_items):
                    y = school.responses[i, j]
                    if y < 0:
                        continue
                    p = item_prob(params, spec, v, j)
                    lik *= p if y == 1 else 1.0 - p
                mix += weights[v] * lik
            total += math.log(mix)
    return total


def independence_model_max_loglik(data):
    """Saturated per-item Bernoulli maximum (the k_V = k_U = 1 ceiling)."""
    responses = np.concatenate([g.responses for g in data.schools], axis=0)
    total = 0.0
    for j in range(responses.shape[1]):
        col = responses[:, j]
        col = col[col >= 0]
        if col.size == 0:
            continue
        c = float((col == 1).sum())
        m = float(col.size)
        for count, p in ((c, c / m), (m - c, 1.0 - c / m)):
            if count > 0:
                total += count * math.log(p)
    return total


# ---------------------------------------------------------------------------
# Expected complete log-likelihood blocks, by plain loops
# ---------------------------------------------------------------------------

def block_item_objective(data, posteriors, spec, difficulty, discrimination,
                         abilities, lc_success=None):
    """Posterior-weighted sum of response log-probabilities."""
    total = 0.0
    for h, school in enumerate(data.schools):
        z = posteriors.class_posterior[h]
        for i in range(school.n_students):
            for v in range(spec.n_classes):
                for j in range(spec.item_bank.n_items):
                    y = school.responses[i, j]
                    if y < 0:
                        continue
                    if spec.parameterization is Parameterization.LC:
                        p = float(lc_success[v, j])
                    else:
                        d = spec.item_bank.dim_of[j]
                        p = sigmoid(discrimination[j]
                                    * (abilities[v, d] - difficulty[j]))
                    total += z[i, v] * math.log(p if y == 1 else 1.0 - p)
    return total


def block_class_objective(data, posteriors, spec, class_intercepts, class_slopes):
    """Joint-posterior-weighted log membership weights of the classes."""
    total = 0.0
    for h, school in enumerate(data.schools):
        zj = posteriors.joint_posterior[h]
        for i in range(school.n_students):
            x = school.student_covariates[i]
            for u in range(spec.n_types):
                logits = [0.0] + [
                    float(class_intercepts[u, v - 1]
                          + np.dot(class_slopes[v - 1], x))
                    for v in range(1, spec.n_classes)]
                weights = softmax(logits)
                for v in range(spec.n_classes):
                    if zj[i, u, v] > 0:
                        total += zj[i, u, v] * math.log(weights[v])
    return total


def block_type_objective(data, posteriors, spec, type_intercepts, type_slopes):
    """Type-posterior-weighted log membership weights of the school types."""
    total = 0.0
    for h, school in enumerate(data.schools):
        logits = [0.0] + [
            float(type_intercepts[u - 1]
                  + np.dot(type_slopes[u - 1], school.covariates))
            for u in range(1, spec.n_types)]
        weights = softmax(logits)
        for u in range(spec.n_types):
            if posteriors.type_posterior[h, u] > 0:
                total += posteriors.type_posterior[h, u] * math.log(weights[u])
    return total


# ---------------------------------------------------------------------------
# Packing of free parameters per block, for generic optimization
# ---------------------------------------------------------------------------

def pack_item_block(spec, params):
    free = ~spec.item_bank.is_reference
    if spec.parameterization is Parameterization.LC:
        logit = np.log(params.lc_success) - np.log1p(-params.lc_success)
        return logit.ravel().copy()
    parts = [params.difficulty[free]]
    if spec.parameterization is Parameterization.TWO_PL:
        parts.append(params.discrimination[free])
    parts.append(params.abilities.ravel())
    return np.concatenate(parts)


def unpack_item_block(spec, params, vec):
    free = ~spec.item_bank.is_reference
    n_free = int(free.sum())
    if spec.parameterization is Parameterization.LC:
        lc = 1.0 / (1.0 + np.exp(-np.asarray(vec).reshape(
            spec.n_classes, spec.item_bank.n_items)))
        return dict(difficulty=params.difficulty, discrimination=params.discrimination,
                    abilities=params.abilities, lc_success=lc)
    difficulty = np.array(params.difficulty)
    difficulty[free] = vec[:n_free]
    pos = n_free
    discrimination = np.array(params.discrimination)
    if spec.parameterization is Parameterization.TWO_PL:
        discrimination[free] = vec[pos:pos + n_free]
        pos += n_free
    abilities = np.asarray(vec[pos:]).reshape(spec.n_classes,
                                              spec.item_bank.n_dims)
    return dict(difficulty=difficulty, discrimination=discrimination,
                abilities=abilities, lc_success=params.lc_success)


def item_block_objective_vec(data, posteriors, spec, params, vec):
    blocks = unpack_item_block(spec, params, vec)
    return block_item_objective(data, posteriors, spec, blocks["difficulty"],
                                blocks["discrimination"], blocks["abilities"],
                                blocks["lc_success"])


def class_block_objective_vec(data, posteriors, spec, vec):
    k_u, k_v = spec.n_types, spec.n_classes
    m_v = data.schools[0].student_covariates.shape[1]
    inter = np.asarray(vec[:k_u * (k_v - 1)]).reshape(k_u, k_v - 1)
    slopes = np.asarray(vec[k_u * (k_v - 1):]).reshape(k_v - 1, m_v)
    return block_class_objective(data, posteriors, spec, inter, slopes)


def type_block_objective_vec(data, posteriors, spec, vec):
    k_u = spec.n_types
    m_u = data.schools[0].covariates.shape[0]
    inter = np.asarray(vec[:k_u - 1])
    slopes = np.asarray(vec[k_u - 1:]).reshape(k_u - 1, m_u)
    return block_type_objective(data, posteriors, spec, inter, slopes)


def maximize(objective, starts):
    """Generic numerical maximizer: BFGS with restarts from every start
    point (a single vector or a list of vectors), re-polished until the
    value stops improving."""
    if isinstance(starts, np.ndarray) and starts.ndim == 1:
        starts = [starts]
    best_x, best_f = None, -np.inf
    for x0 in starts:
        x = np.asarray(x0, dtype=float)
        for _ in range(3):
            result = minimize(lambda v: -objective(v), x, method="BFGS",
                              options={"gtol": 1e-10, "maxiter": 2000})
            x = result.x
            if -result.fun <= best_f + 1e-12:
                break
            best_f = -result.fun
            best_x = x
    return best_x, best_f


def finite_difference_gradient(objective, x, step=1e-5):
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for k in range(x.size):
        up = x.copy()
        dn = x.copy()
        up[k] += step
        dn[k] -= step
        grad[k] = (objective(up) - objective(dn)) / (2.0 * step)
    return grad


# ---------------------------------------------------------------------------
# Direct (non-EM) single-level fit for the nesting comparison
# ---------------------------------------------------------------------------

def _single_level_vec_to_params(spec, base, vec):
    free = ~spec.item_bank.is_reference
    n_free = int(free.sum())
    difficulty = np.zeros(spec.item_bank.n_items)
    difficulty[free] = vec[:n_free]
    pos = n_free
    discrimination = np.ones(spec.item_bank.n_items)
    if spec.parameterization is Parameterization.TWO_PL:
        discrimination[free] = vec[pos:pos + n_free]
        pos += n_free
    k_v, s = spec.n_classes, spec.item_bank.n_dims
    abilities = np.asarray(vec[pos:pos + k_v * s]).reshape(k_v, s)
    pos += k_v * s
    intercepts = np.asarray(vec[pos:]).reshape(1, k_v - 1)
    return base.replace(difficulty=difficulty, discrimination=discrimination,
                        abilities=abilities, class_intercepts=intercepts)


def fit_single_level_direct(data, spec, base_params, extra_starts, rng):
    """Best single-level log-likelihood found by generic optimization.

    Starts from ``base_params`` (typically the EM solution) plus
    ``extra_starts`` random points; returns the best log-likelihood.
    """
    assert spec.n_types == 1 and spec.n_student_covariates == 0

    def objective(vec):
        params = _single_level_vec_to_params(spec, base_params, vec)
        return single_level_loglik(data, params, spec)

    free = ~spec.item_bank.is_reference
    x_base = [base_params.difficulty[free]]
    if spec.parameterization is Parameterization.TWO_PL:
        x_base.append(base_params.discrimination[free])
    x_base.append(base_params.abilities.ravel())
    x_base.append(base_params.class_intercepts.ravel())
    x_base = np.concatenate(x_base)

    best = -np.inf
    starts = [x_base] + [x_base + rng.uniform(-1.0, 1.0, size=x_base.size)
                         for _ in range(extra_starts)]
    for x0 in starts:
        result = minimize(lambda v: -objective(v), x0, method="BFGS",
                          options={"gtol": 1e-9, "maxiter": 3000})
        best = max(best, -result.fun)
    return best
