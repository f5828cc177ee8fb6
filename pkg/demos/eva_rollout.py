"""Run the attention model with random weights on a few synthetic images.

Random weights classify at chance, so the point is the mechanics: where the model
looks, how sigma moves with the error signal, and how the harnesses report
policy overrides and initial-condition changes.  The first rollout is driven by
label errors, so sigma stays high.  The harnesses run without labels: the
self-error of random weights is tiny, sigma sinks to its floor and fixations
cluster near the centre, hence the low coverage.

    python demos/eva_rollout.py
"""
import numpy as np

from evakit.analysis import InitCondition, Sample, init_sweep, run_perturbation_study
from evakit.eva import EvaDims, init_weights, rollout, total_objective
from evakit.synth import smooth_image

dims = EvaDims(conv_widths=(16, 16, 32, 32), periphery_dim=32, lower_hidden=32, upper_hidden=32, key_dim=16)
w = init_weights(dims, seed=1)
rng = np.random.default_rng(0)
samples = [Sample(f"img{i}", smooth_image(rng)[0], i % 10) for i in range(8)]

tr = rollout(samples[0].image, w, seed=4, label=samples[0].label, image_id="img0")
print("step   x      y     sigma  error  gate   pred")
for t, s in enumerate(tr.steps, 1):
    print(f"{t:>4} {s.location[0]:6.2f} {s.location[1]:6.2f} {s.sigma:6.3f} {s.error:6.3f} {s.gate_mean:6.3f} {s.prediction:>5}")
print(f"total objective {total_objective(tr, samples[0].label):.4f}\n")

rep = run_perturbation_study(samples, w, seed=2)
for row in rep.rows():
    print(f"{row['policy']:<16} accuracy {row['accuracy']:.3f}  delta {row['delta']:+.3f}")
print()

conds = [InitCondition("center"), InitCondition("center_sigma0", init_sigma=0.0),
         InitCondition("offcenter", init_fixation=(8.0, 8.0)), InitCondition("random_states", init_states="random")]
for row in init_sweep(samples, w, conditions=conds, seed=2).rows:
    print(f"{row.condition:<14} first saccade {row.first_step_amplitude:6.2f} px  coverage {row.spatial_coverage:.3f}")
