"""Acceptance criteria 1-13, each recorded as one PASS/FAIL line in the summary.

Criteria 8-12 share the cached desk dataset, checkpoint and method
comparison from ``conftest.py``; a cold run takes roughly an hour on one core.
"""
import numpy as np

from tlfwi import adjoint, config, inversion, scenarios, wave
from tlfwi.cli import main
from tlfwi.errors import InverseCrime
from tlfwi.nn import PolynomialDecay, generator, init_weights, noise_input
from tlfwi.nn.optim import Adam, RMSprop, clip_by_global_norm

from conftest import DESK, N_HELDOUT, N_TRAIN
from helpers import central_difference, fd_check_network, rel_err, small_survey
from test_adjoint import dot_test_errors, gradient_fd_errors
from test_nn import LAYER_CASES, randomize, single

# (shape after layer, per-layer learnable parameters), transcribed from the
# published architecture tables
GENERATOR_ROWS = [
    ((128, 8, 4), ()),
    ((128, 16, 8), ()), ((128, 16, 8), (147584, 1)), ((128, 16, 8), (147584, 1)),
    ((128, 32, 16), ()), ((64, 32, 16), (73792, 1)), ((64, 32, 16), (36928, 1)),
    ((64, 64, 32), ()), ((64, 64, 32), (36928, 1)), ((64, 64, 32), (36928, 1)),
    ((64, 128, 64), ()), ((32, 128, 64), (18464, 1)), ((32, 128, 64), (9248, 1)),
    ((32, 256, 128), ()), ((32, 256, 128), (9248, 1)), ((32, 256, 128), (9248, 1)),
    ((1, 254, 126), (289, 1)),
]
UNET_ROWS = [
    ((1, 256, 128), ()),
    ((16, 256, 128), (160, 32, 1)), ((16, 256, 128), (2320, 32, 1)), ((16, 128, 64), ()),
    ((32, 128, 64), (4640, 64, 1)), ((32, 128, 64), (9248, 64, 1)), ((32, 64, 32), ()),
    ((64, 64, 32), (18496, 128, 1)), ((64, 64, 32), (36928, 128, 1)), ((64, 32, 16), ()),
    ((128, 32, 16), (73856, 256, 1)), ((128, 32, 16), (147584, 256, 1)), ((128, 16, 8), ()),
    ((128, 16, 8), (147584, 256, 1)), ((128, 16, 8), (147584, 256, 1)), ((128, 32, 16), ()),
    ((64, 32, 16), (110656, 128, 1)), ((64, 32, 16), (36928, 1)), ((64, 64, 32), ()),
    ((32, 64, 32), (27680, 64, 1)), ((32, 64, 32), (9248, 1)), ((32, 128, 64), ()),
    ((16, 128, 64), (6928, 32, 1)), ((16, 128, 64), (2320, 1)), ((16, 256, 128), ()),
    ((1, 256, 128), (154, 2, 1)), ((1, 256, 128), (10, 1)),
]


def test_criterion_01_architecture(criterion):
    from tlfwi.nn import unet

    gen, un = generator((256, 128)), unet((256, 128))
    gen_rows = [(r.shape, r.params) for r in gen.table()]
    un_rows = [(r.shape, r.params) for r in un.table()]
    # the extra last generator row restores the grid size and has no parameters
    extra = gen_rows[len(GENERATOR_ROWS):]
    ok = (gen.n_params == 526_252 and un.n_params == 784_039
          and gen_rows[:len(GENERATOR_ROWS)] == GENERATOR_ROWS
          and extra == [((1, 256, 128), ())] and un_rows == UNET_ROWS)
    diffs = [f"U-Net row {i}: {a} vs published {b}" for i, (a, b) in enumerate(zip(un_rows, UNET_ROWS)) if a != b]
    diffs += [f"generator row {i}: {a} vs published {b}"
              for i, (a, b) in enumerate(zip(gen_rows, GENERATOR_ROWS)) if a != b]
    criterion(1, ok, f"generator {gen.n_params:,} params, U-Net {un.n_params:,} params "
                     f"(published rows sum to {sum(sum(p) for _, p in UNET_ROWS):,}); "
                     f"row mismatches: {'; '.join(diffs) or 'none'}")


def test_criterion_02_pde_gradient(criterion):
    errs = gradient_fd_errors()
    criterion(2, errs.max() <= 1e-4, f"max relative error {errs.max():.2e} over {errs.size} entries (<= 1e-4)")


def test_criterion_03_adjoint_dot_test(criterion):
    errs = dot_test_errors(10)
    criterion(3, errs.max() <= 1e-8, f"max relative mismatch {errs.max():.2e} over 10 pairs (<= 1e-8)")


def test_criterion_04_nn_gradients(criterion):
    from tlfwi.nn import AdaptiveSigmoid, BatchNorm2d, Conv2d, MaxPool2d, Network, Node, PReLU, Upsample

    rng = np.random.default_rng(7)
    worst = 0.0
    for name, make, shape in LAYER_CASES:
        net = single(make(), shape)
        randomize(net, rng)
        for train in ((True, False) if name == "batchnorm" else (True,)):
            worst = max(worst, *fd_check_network(net, rng.normal(size=(2,) + shape), rng, train=train))
    composite = Network([
        Node("c1", [Conv2d(1, 3), BatchNorm2d(3), PReLU()]),
        Node("pool", [MaxPool2d()]),
        Node("up", [Upsample(), Conv2d(3, 2)]),
        Node("out", [Conv2d(3, 1), AdaptiveSigmoid()], inputs=(2, -1)),
    ], (1, 6, 4))
    randomize(composite, rng)
    worst = max(worst, *fd_check_network(composite, rng.normal(size=(2, 1, 6, 4)), rng))
    criterion(4, worst <= 1e-6, f"worst relative error {worst:.2e} across {len(LAYER_CASES)} layer types "
                                f"and the 4-row composite (<= 1e-6)")


def test_criterion_05_hybrid_chain_rule(criterion):
    sv = small_survey(nx=16, ny=8, nt=120, n_receivers=3)
    truth = np.ones(sv.grid.shape)
    truth[6:10, 3:6] = 1e-5
    obs, _ = wave.simulate_survey(truth, sv)
    net = generator(sv.grid.shape, latent_channels=2, widths=(3, 3))
    init_weights(net, 0)
    noise = noise_input(net.input_shape, 1)
    scale = 1e30
    field = inversion._NetworkField(net, noise, train=True)
    gamma = field.field()
    _, g, _ = adjoint.misfit_and_gradient(gamma, sv, obs)
    dtheta = field.pullback(g * scale)

    def loss(theta):
        saved = net.theta.copy()
        net.theta[:] = theta
        recs, _ = wave.simulate_survey(np.maximum(net.forward(noise)[0, 0], inversion.GAMMA_FLOOR), sv)
        net.theta[:] = saved
        return adjoint.misfit(recs, obs) * scale

    top = np.argsort(np.abs(dtheta))[-10:]
    theta0 = net.theta.copy()
    fd = np.empty(10)
    for k, i in enumerate(top):
        fd[k] = central_difference(lambda t: loss(np.r_[theta0[:i], t, theta0[i + 1:]]),
                                   theta0[i:i + 1], 1e-6)[0]
    errs = np.abs(dtheta[top] - fd) / np.abs(fd)
    criterion(5, errs.max() <= 1e-3, f"max relative error {errs.max():.2e} on the 10 largest of "
                                     f"{net.n_params} entries (<= 1e-3)")


def test_criterion_06_initialization(criterion):
    means, stds = [], []
    for seed in range(10):
        net, noise = inversion.generator_for((DESK.nx, DESK.ny), seed)
        out = net.forward(noise)[0, 0]
        means.append(out.mean())
        stds.append(out.std())
    ok = all(0.90 <= m <= 0.99 for m in means) and max(stds) < 0.05
    criterion(6, ok, f"means in [{min(means):.4f}, {max(means):.4f}], max pixel std {max(stds):.2e}")


def test_criterion_07_schedule_and_optimizers(criterion):
    s = PolynomialDecay(-0.5, 0.2)
    p = np.array([1.0, 2.0])
    noop = True
    for cls in (Adam, RMSprop):
        q = p.copy()
        cls(2, 1e-2, clip=1.0).step(q, np.zeros(2), 0)
        noop &= np.array_equal(q, p)
    g, _ = clip_by_global_norm(np.random.default_rng(0).normal(size=100) * 50, 5e-5)
    ok = s(0) == 1.0 and abs(s(5) - 0.70711) <= 1e-5 and noop and np.linalg.norm(g) <= 5e-5
    criterion(7, ok, f"factor(0)={s(0)}, factor(5)={s(5):.6f}, zero-grad no-op={noop}, "
                     f"clipped norm {np.linalg.norm(g):.3e} <= 5e-5")


def test_criterion_08_pretraining_benefit(criterion, desk_dataset, pretrained):
    from tlfwi import pretrain

    held = desk_dataset[N_TRAIN:N_TRAIN + N_HELDOUT]
    mse_net = pretrain.evaluate(pretrained[0], held)
    mse_one = np.array([np.mean((1.0 - r.target) ** 2) for r in held])
    wins = int(np.sum(mse_net < mse_one))
    criterion(8, wins >= 8, f"U-Net beats the intact predictor on {wins}/10 held-out cases "
                            f"(mean {mse_net.mean():.4f} vs {mse_one.mean():.4f})")


def non_increasing(curve, tol=0.05):
    ratios = curve[1:] / curve[:-1]
    return bool(np.all(ratios <= 1 + tol)), float(ratios.max() - 1)


def test_criterion_09_method_ordering(criterion, desk_comparison):
    final = {m: r["mses"][:, -1].mean() for m, r in desk_comparison.items()}
    n_cases = len(desk_comparison["transfer"]["mses"])
    mono_nn, up_nn = non_increasing(desk_comparison["nn_based"]["mses"].mean(axis=0))
    mono_tr, up_tr = non_increasing(desk_comparison["transfer"]["mses"].mean(axis=0))
    ok = (n_cases == 10 and final["transfer"] <= final["nn_based"]
          and final["transfer"] <= final["conventional"] and mono_nn and mono_tr)
    criterion(9, ok, f"{n_cases} cases; final mean MSE transfer {final['transfer']:.4f}, "
                     f"nn {final['nn_based']:.4f}, conventional {final['conventional']:.4f}; "
                     f"largest uptick nn {up_nn:+.1%}, transfer {up_tr:+.1%} (<= 5%)")


def case_problem(name):
    survey = config.survey(DESK)
    scen = scenarios.case_scenario(name)
    truth = scenarios.rasterize(scen, survey.grid)
    obs = scenarios.generate_observation(scen, scenarios.fine_survey_for(survey), survey)
    return survey, truth, obs


def test_criterion_10_out_of_distribution(criterion, pretrained):
    survey, truth, obs = case_problem("case2")
    run = inversion.run_transfer(obs, survey, pretrained[0],
                                 config.inversion_config(DESK, "transfer"), truth)
    base = inversion.mse_to_truth(np.ones_like(truth), truth)
    ratio = run.mses[-1] / base
    criterion(10, ratio < 0.5, f"case2 transfer final MSE {run.mses[-1]:.4f} = {ratio:.1%} "
                               f"of the intact-plate MSE {base:.4f} (< 50%)")


CORRUPTION = dict(strength=0.8, seed=7)


def test_criterion_11_bad_initial_guess(criterion, pretrained):
    survey, truth, obs = case_problem("case2")
    bad = inversion.corrupt(pretrained[0], **CORRUPTION)
    cfg = config.inversion_config(DESK, "transfer", iterations=70)
    run = inversion.run_transfer(obs, survey, bad, cfg, truth)
    good0 = pretrained[0].predict(inversion.transfer_input(obs, survey))[0, 0]
    ratio = run.costs[69] / run.costs[0]
    criterion(11, ratio < 0.25, f"cost ratio iteration 70/1 = {ratio:.3f} (< 0.25); corrupted start "
                                f"MSE {run.mses[0]:.4f} vs intact network {inversion.mse_to_truth(good0, truth):.4f}, "
                                f"final MSE {run.mses[-1]:.4f}")


def test_criterion_12_determinism(criterion, tmp_path, pretrained, desk_comparison):
    outs = [tmp_path / f"run{k}" for k in range(2)]
    codes = [main(["--deterministic", "compare", "--cases", "2", "--methods", "conventional", "nn",
                   "transfer", "--checkpoint", str(pretrained[1]), "--out", str(o)]) for o in outs]
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
               for f in ("aggregate.csv", "finals.csv"))
    from tlfwi import formats

    finals = formats.read_csv(outs[0] / "finals.csv")
    expected = {m: r["mses"][:2, -1] for m, r in desk_comparison.items()}
    matches = all(float(f["final_mse"]) == expected[f["method"]][int(f["case_seed"]) - DESK.test_seed]
                  for f in finals)
    criterion(12, codes == [0, 0] and same and matches,
              f"exit codes {codes}, byte-identical CSVs {same}, "
              f"finals equal the 10-case comparison {matches}")


def test_criterion_13_inverse_crime_guard(criterion):
    survey = config.survey(DESK)
    intact = scenarios.Scenario(())
    try:
        scenarios.generate_observation(intact, survey, survey)
        rejected = False
    except InverseCrime:
        rejected = True
    obs = scenarios.generate_observation(intact, scenarios.fine_survey_for(survey), survey)
    sim, _ = wave.simulate_survey(np.ones(survey.grid.shape), survey)
    gap = rel_err(np.stack([s.traces for s in sim]), np.stack([o.traces for o in obs]))
    criterion(13, rejected and 0 < gap < 0.2,
              f"same-grid generation rejected {rejected}; fine/coarse relative L2 residual {gap:.3f}")
