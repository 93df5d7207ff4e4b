# Case 1 with each inversion method. Pass a checkpoint (from `tlfwi pretrain`)
# to include the two pretrained variants:
#   python demos/04_four_methods.py runs/pt/checkpoint.fwic
import sys

import numpy as np

from tlfwi import config, inversion, pretrain, scenarios
from tlfwi.commands import ascii_render

ITERS = 15
cfg = config.ExperimentConfig()
survey = config.survey(cfg)
scen = scenarios.case_scenario("case1")
truth = scenarios.rasterize(scen, survey.grid)
obs = scenarios.generate_observation(scen, scenarios.fine_survey_for(survey), survey)
print("intact-plate MSE", inversion.mse_to_truth(np.ones_like(truth), truth))

net = None
methods = ["conventional", "nn_based"]
if len(sys.argv) > 1:
    net, _, _ = pretrain.load_checkpoint(sys.argv[1], survey.grid.shape)
    methods += ["conventional_with_init", "transfer"]

g0 = inversion.first_iteration_gradient(obs, survey)
for method in methods:
    icfg = config.inversion_config(cfg, method, iterations=ITERS)
    run = inversion.run_method(method, obs, survey, icfg, truth, net, g0)
    print(f"\n{method}  lr {icfg.lr}  clip {icfg.clip}  cost scale {icfg.cost_scale:g}")
    print("mse", " ".join(f"{m:.4f}" for m in run.mses))
    print(ascii_render(run.final))

print("\ntruth")
print(ascii_render(truth))
