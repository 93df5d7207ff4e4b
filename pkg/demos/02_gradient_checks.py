# The discrete adjoint on a 24x12 plate: finite differences and the dot-product test.
import numpy as np

from tlfwi import adjoint, wave

rng = np.random.default_rng(0)
dt = wave.stable_dt(0.1, 0.05, 24, 12, 6000.0, 0.6)
grid = wave.GridSpec(0.1, 0.05, 24, 12, dt, 200)
survey = wave.Survey(grid, ((12, 0),), ((2, 0), (8, 0), (14, 0), (21, 0)),
                     wave.SineBurst(frequency=5e5 * 128 / 24 / 2))

truth = np.where(rng.random(grid.shape) < 0.3, 0.6, 1.0)
gamma = np.where(rng.random(grid.shape) < 0.3, 0.7, 1.0)
obs, _ = wave.simulate_survey(truth, survey)
cost, grad, _ = adjoint.misfit_and_gradient(gamma, survey, obs)
print("misfit", cost)


def misfit_at(gm):
    recs, _ = wave.simulate_survey(gm, survey)
    return adjoint.misfit(recs, obs)


# a handful of the strongest entries
for idx in np.argsort(np.abs(grad).ravel())[-5:]:
    i, j = np.unravel_index(idx, grid.shape)
    e = np.zeros(grid.shape)
    e[i, j] = 1e-6
    fd = (misfit_at(gamma + e) - misfit_at(gamma - e)) / 2e-6
    print((i, j), "adjoint", grad[i, j], "fd", fd, "rel", abs(grad[i, j] - fd) / abs(fd))

# <w, J dg> against <J^T w, dg>
_, hists = wave.simulate_survey(gamma, survey, store_history=True)
for _ in range(3):
    dg = rng.normal(size=grid.shape)
    w = [rng.normal(size=(4, grid.nt))]
    lhs = np.sum(w[0] * adjoint.born_simulate(gamma, dg, survey, 0, hists[0]))
    rhs = np.sum(adjoint.jacobian_transpose(gamma, survey, w, hists) * dg)
    print("dot test", lhs, rhs, abs(lhs - rhs) / abs(lhs))
