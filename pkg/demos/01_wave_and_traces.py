# Forward modelling on the desk plate: an intact plate versus one with a hole.
import numpy as np

from tlfwi import config, scenarios, wave
from tlfwi.commands import ascii_render

cfg = config.ExperimentConfig()
survey = config.survey(cfg)
g = survey.grid
print("grid", g.shape, "dt", g.dt, "steps", g.nt, "courant", round(wave.courant_number(g, cfg.c0), 3))
print("sources", survey.sources)
print("receivers", survey.receivers[0], "...", survey.receivers[-1])

holed = scenarios.case_scenario("case1")
print(holed.describe())
gamma = scenarios.rasterize(holed, g)
print(ascii_render(gamma))

intact, _ = wave.simulate_survey(np.ones(g.shape), survey)
damaged, hists = wave.simulate_survey(gamma, survey, store_history=True)

# the scattered part of shot 0, per receiver
diff = damaged[0].traces - intact[0].traces
print("peak trace", np.abs(intact[0].traces).max())
print("peak scattered", np.abs(diff).max())
print("scattered energy per receiver")
print(np.round(np.sum(diff**2, axis=1) / np.sum(intact[0].traces**2, axis=1), 4))

# wavefield halfway through the run, folded into [0, 1] for display
u = hists[0][g.nt // 2]
print(ascii_render(0.5 + 0.5 * u / np.abs(u).max()))
