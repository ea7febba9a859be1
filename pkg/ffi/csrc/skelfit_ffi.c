/* C-compatible boundary for the composite-chamfer kernels and skeleton
 * sampling, so external training loops can use them as a custom loss.
 *
 * Contract highlights:
 *  - All buffers are caller-owned; nothing is retained past a call and no
 *    allocation ownership crosses the boundary.
 *  - Functions return 0 on success or a nonzero error code, copying a
 *    message into the caller's err buffer; they never abort the process.
 *  - Results are bit-identical to the in-process library: distances are
 *    sqrt((dx*dx + dy*dy) + dz*dz), candidate comparisons use the
 *    post-sqrt distance with strict less-than (first candidate wins ties),
 *    and accumulation follows input order. Keep any edits in lockstep with
 *    the library kernels, and build with -ffp-contract=off.
 *
 * Symbols are versioned with the skelfit_v1_ prefix. Reentrant: no global
 * state, safe to call from many threads at once.
 */

#include <math.h>
#include <stdint.h>
#include <stdlib.h>
#include <string.h>

#define ZERO_GUARD 1e-12

#define ERR_ARG 1
#define ERR_ALLOC 2

static int fail(char *err, int64_t err_len, int code, const char *message) {
    if (err != NULL && err_len > 0) {
        strncpy(err, message, (size_t)err_len - 1);
        err[err_len - 1] = '\0';
    }
    return code;
}

static double dist3(const double *a, const double *b) {
    double dx = a[0] - b[0];
    double dy = a[1] - b[1];
    double dz = a[2] - b[2];
    return sqrt((dx * dx + dy * dy) + dz * dz);
}

const char *skelfit_v1_version(void) { return "1"; }

int64_t skelfit_v1_edge_count(int64_t k) {
    if (k < 2) return -1;
    return k * (k - 1) / 2;
}

static int check_layout(const int64_t *edge_starts, int64_t n_edges, int64_t n_pool,
                        char *err, int64_t err_len) {
    int64_t e;
    if (n_edges < 1)
        return fail(err, err_len, ERR_ARG, "need at least one sub-cloud");
    if (edge_starts[0] != 0)
        return fail(err, err_len, ERR_ARG, "edge_starts must begin at 0");
    for (e = 0; e < n_edges; e++) {
        if (edge_starts[e + 1] - edge_starts[e] < 1)
            return fail(err, err_len, ERR_ARG, "every sub-cloud needs at least one point");
    }
    if (edge_starts[n_edges] != n_pool)
        return fail(err, err_len, ERR_ARG, "edge_starts do not partition the point buffer");
    return 0;
}

/* Fidelity: per pool point, nearest input distance; loss sums per edge. */
static void fidelity(const double *x, int64_t n_input, const double *pool, int64_t n_pool,
                     const int64_t *starts, int64_t n_edges, const double *a,
                     double *out_value, double *grad_pool, double *grad_a,
                     double *nn_dist, int64_t *nn_idx) {
    int64_t s, j, e;
    double value = 0.0;
    for (s = 0; s < n_pool; s++) {
        double best_d = 0.0;
        int64_t best_j = -1;
        for (j = 0; j < n_input; j++) {
            double d = dist3(pool + 3 * s, x + 3 * j);
            if (best_j < 0 || d < best_d) {
                best_d = d;
                best_j = j;
            }
        }
        nn_dist[s] = best_d;
        nn_idx[s] = best_j;
    }
    for (e = 0; e < n_edges; e++) {
        double s_e = 0.0;
        for (s = starts[e]; s < starts[e + 1]; s++) s_e = s_e + nn_dist[s];
        grad_a[e] = s_e;
        value = value + a[e] * s_e;
    }
    for (e = 0; e < n_edges; e++) {
        for (s = starts[e]; s < starts[e + 1]; s++) {
            double d = nn_dist[s];
            if (d >= ZERO_GUARD) {
                int64_t j = nn_idx[s];
                double coeff = a[e] / d;
                grad_pool[3 * s + 0] = coeff * (pool[3 * s + 0] - x[3 * j + 0]);
                grad_pool[3 * s + 1] = coeff * (pool[3 * s + 1] - x[3 * j + 1]);
                grad_pool[3 * s + 2] = coeff * (pool[3 * s + 2] - x[3 * j + 2]);
            }
        }
    }
    *out_value = value;
}

/* Coverage: per input point, walk sub-clouds in nearest-candidate order,
 * charging a_i * distance until the selected activations reach 1; penalize
 * any unsaturated remainder with gamma. */
static void coverage(const double *x, int64_t n_input, const double *pool, int64_t n_pool,
                     const int64_t *starts, int64_t n_edges, const double *a, double gamma,
                     double *out_value, double *grad_pool, double *grad_a,
                     double *cand_d, int64_t *cand_i, unsigned char *used, int64_t *sel) {
    int64_t q, e, s;
    double value = 0.0;
    (void)n_pool;
    for (q = 0; q < n_input; q++) {
        double w = 0.0;
        int64_t taken = 0;
        for (e = 0; e < n_edges; e++) {
            double best_d = 0.0;
            int64_t best_i = -1;
            for (s = starts[e]; s < starts[e + 1]; s++) {
                double d = dist3(pool + 3 * s, x + 3 * q);
                if (best_i < 0 || d < best_d) {
                    best_d = d;
                    best_i = s;
                }
            }
            cand_d[e] = best_d;
            cand_i[e] = best_i;
            used[e] = 0;
        }
        for (;;) {
            int64_t pick = -1;
            double pick_d = 0.0;
            double d;
            for (e = 0; e < n_edges; e++) {
                if (!used[e] && (pick < 0 || cand_d[e] < pick_d)) {
                    pick_d = cand_d[e];
                    pick = e;
                }
            }
            if (pick < 0) break;
            used[pick] = 1;
            d = cand_d[pick];
            value = value + a[pick] * d;
            grad_a[pick] = grad_a[pick] + d;
            if (d >= ZERO_GUARD) {
                int64_t pt = cand_i[pick];
                double coeff = a[pick] / d;
                grad_pool[3 * pt + 0] += coeff * (pool[3 * pt + 0] - x[3 * q + 0]);
                grad_pool[3 * pt + 1] += coeff * (pool[3 * pt + 1] - x[3 * q + 1]);
                grad_pool[3 * pt + 2] += coeff * (pool[3 * pt + 2] - x[3 * q + 2]);
            }
            sel[taken++] = pick;
            w = w + a[pick];
            if (w >= 1.0) break;
        }
        if (w < 1.0) {
            value = value + gamma * (1.0 - w);
            for (s = 0; s < taken; s++) grad_a[sel[s]] = grad_a[sel[s]] - gamma;
        }
    }
    *out_value = value;
}

int skelfit_v1_ccd_forward_backward(
    const double *input_xyz, int64_t n_input,
    const double *pool_xyz, int64_t n_pool,
    const int64_t *edge_starts, int64_t n_edges,
    const double *activations,
    double gamma, double lambda_f, double lambda_c,
    double *out_losses,       /* 3 values: L, L_f, L_c */
    double *out_grad_points,  /* n_pool * 3 */
    double *out_grad_acts,    /* n_edges */
    char *err, int64_t err_len) {
    double lf = 0.0, lc = 0.0;
    double *gpf = NULL, *gaf = NULL, *gpc = NULL, *gac = NULL, *nn_dist = NULL, *cand_d = NULL;
    int64_t *nn_idx = NULL, *cand_i = NULL, *sel = NULL;
    unsigned char *used = NULL;
    int rc = 0;
    int64_t i, e;

    if (input_xyz == NULL || pool_xyz == NULL || edge_starts == NULL || activations == NULL ||
        out_losses == NULL || out_grad_points == NULL || out_grad_acts == NULL)
        return fail(err, err_len, ERR_ARG, "null buffer");
    if (n_input < 1) return fail(err, err_len, ERR_ARG, "input cloud is empty");
    rc = check_layout(edge_starts, n_edges, n_pool, err, err_len);
    if (rc != 0) return rc;
    for (e = 0; e < n_edges; e++) {
        if (!(activations[e] >= 0.0 && activations[e] <= 1.0))
            return fail(err, err_len, ERR_ARG, "activation strengths must lie in [0, 1]");
    }
    if (!(gamma > 0.0)) return fail(err, err_len, ERR_ARG, "gamma must be positive");
    if (lambda_f < 0.0 || lambda_c < 0.0)
        return fail(err, err_len, ERR_ARG, "loss weights must be nonnegative");

    gpf = (double *)calloc((size_t)(3 * n_pool), sizeof(double));
    gaf = (double *)calloc((size_t)n_edges, sizeof(double));
    gpc = (double *)calloc((size_t)(3 * n_pool), sizeof(double));
    gac = (double *)calloc((size_t)n_edges, sizeof(double));
    nn_dist = (double *)malloc((size_t)n_pool * sizeof(double));
    nn_idx = (int64_t *)malloc((size_t)n_pool * sizeof(int64_t));
    cand_d = (double *)malloc((size_t)n_edges * sizeof(double));
    cand_i = (int64_t *)malloc((size_t)n_edges * sizeof(int64_t));
    sel = (int64_t *)malloc((size_t)n_edges * sizeof(int64_t));
    used = (unsigned char *)malloc((size_t)n_edges);
    if (!gpf || !gaf || !gpc || !gac || !nn_dist || !nn_idx || !cand_d || !cand_i || !sel || !used) {
        rc = fail(err, err_len, ERR_ALLOC, "out of memory");
        goto done;
    }

    fidelity(input_xyz, n_input, pool_xyz, n_pool, edge_starts, n_edges, activations,
             &lf, gpf, gaf, nn_dist, nn_idx);
    coverage(input_xyz, n_input, pool_xyz, n_pool, edge_starts, n_edges, activations, gamma,
             &lc, gpc, gac, cand_d, cand_i, used, sel);

    out_losses[0] = lambda_f * lf + lambda_c * lc;
    out_losses[1] = lf;
    out_losses[2] = lc;
    for (i = 0; i < 3 * n_pool; i++) out_grad_points[i] = lambda_f * gpf[i] + lambda_c * gpc[i];
    for (e = 0; e < n_edges; e++) out_grad_acts[e] = lambda_f * gaf[e] + lambda_c * gac[e];

done:
    free(gpf);
    free(gaf);
    free(gpc);
    free(gac);
    free(nn_dist);
    free(nn_idx);
    free(cand_d);
    free(cand_i);
    free(sel);
    free(used);
    return rc;
}

int skelfit_v1_plan_sampling(
    const double *keypoints_xyz, int64_t k,
    int64_t total_budget,
    int64_t *out_counts, /* k(k-1)/2 */
    char *err, int64_t err_len) {
    int64_t n_edges, e, i, j;
    double total_len = 0.0;

    if (keypoints_xyz == NULL || out_counts == NULL)
        return fail(err, err_len, ERR_ARG, "null buffer");
    if (k < 2) return fail(err, err_len, ERR_ARG, "a skeleton needs at least 2 keypoints");
    n_edges = k * (k - 1) / 2;
    if (total_budget < n_edges)
        return fail(err, err_len, ERR_ARG, "budget is below the edge count");

    e = 0;
    for (i = 0; i < k - 1; i++) {
        for (j = i + 1; j < k; j++) {
            double length = dist3(keypoints_xyz + 3 * j, keypoints_xyz + 3 * i);
            total_len = total_len + length;
            out_counts[e++] = 0; /* second pass fills counts */
        }
    }
    e = 0;
    for (i = 0; i < k - 1; i++) {
        for (j = i + 1; j < k; j++) {
            double length = dist3(keypoints_xyz + 3 * j, keypoints_xyz + 3 * i);
            if (total_len == 0.0) {
                out_counts[e] = 1;
            } else {
                int64_t n = (int64_t)floor((double)total_budget * length / total_len + 0.5);
                out_counts[e] = n < 1 ? 1 : n;
            }
            e++;
        }
    }
    return 0;
}

int skelfit_v1_sample_skeleton(
    const double *keypoints_xyz, int64_t k,
    const int64_t *counts, /* k(k-1)/2, from skelfit_v1_plan_sampling */
    double *out_points,    /* sum(counts) * 3, caller-allocated */
    char *err, int64_t err_len) {
    int64_t e, i, j, s, cursor;

    if (keypoints_xyz == NULL || counts == NULL || out_points == NULL)
        return fail(err, err_len, ERR_ARG, "null buffer");
    if (k < 2) return fail(err, err_len, ERR_ARG, "a skeleton needs at least 2 keypoints");

    e = 0;
    cursor = 0;
    for (i = 0; i < k - 1; i++) {
        for (j = i + 1; j < k; j++) {
            const double *u = keypoints_xyz + 3 * i;
            const double *v = keypoints_xyz + 3 * j;
            int64_t n = counts[e];
            if (n < 1) return fail(err, err_len, ERR_ARG, "counts must be positive");
            for (s = 0; s < n; s++) {
                double t = ((double)s + 0.5) / (double)n;
                out_points[3 * cursor + 0] = u[0] + t * (v[0] - u[0]);
                out_points[3 * cursor + 1] = u[1] + t * (v[1] - u[1]);
                out_points[3 * cursor + 2] = u[2] + t * (v[2] - u[2]);
                cursor++;
            }
            e++;
        }
    }
    return 0;
}
