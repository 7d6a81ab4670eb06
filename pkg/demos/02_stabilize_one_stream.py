"""
Frame-by-frame stabilization of a jittery track
===============================================

The stabilizer keeps an exponentially weighted history of its own outputs.
Each new detection is pulled towards the history mean by an amount set by a
two-component mixture prior: one tight component for "nothing moved", one
broad component for real motion.

Watch the frames after the move: the history mean trails the truth, so the
output settles onto the new position gradually rather than at once.
"""

import numpy as np

from fracstab import StabilizerParams, StreamState, stabilize_frame
from fracstab.synth import MotionSpec, NoiseSpec, corrupt, gen_ground_truth

# One landmark: still for 40 frames, then a quick move, then still again.
segments = [
    MotionSpec("static", frames=40),
    MotionSpec("ramp", frames=10, velocity=(3.0, 0.0)),
    MotionSpec("static", frames=40),
]
truth = gen_ground_truth(MotionSpec("piecewise", segments=segments, layout=[[300.0, 300.0]]))
detections = corrupt(truth, NoiseSpec(coordinate_noise_std=1.5, seed=1))

params = StabilizerParams(
    gamma=0.6,
    alpha=np.array([0.7, 0.3]),
    beta=np.array([0.9, 0.9]),
    gamma_noise=np.full(2, 2.25),          # detector variance, px^2
    gamma_k=np.array([[0.5, 0.5],          # "still" component
                      [40.0, 40.0]]),      # "moving" component
    V=np.eye(2),
)

state = StreamState.initial(2)
outputs = []
print(" t   truth_x  detect_x  output_x  component")
for t, z in enumerate(detections.frames):
    x, decision, state = stabilize_frame(state, params, z)
    outputs.append(x)
    if 38 <= t <= 56:
        chosen = "-" if decision is None else decision.chosen
        print(f"{t:2d} {truth.frames[t, 0, 0]:9.2f} {z[0, 0]:9.2f} {x[0, 0]:9.2f}  {chosen}")

outputs = np.array(outputs)
for name, frames in (("still", slice(1, 40)), ("moving", slice(40, 50)), ("settled", slice(60, 90))):
    det = np.sqrt(np.mean((detections.frames[frames] - truth.frames[frames]) ** 2))
    out = np.sqrt(np.mean((outputs[frames] - truth.frames[frames]) ** 2))
    print(f"{name:>8}: detector rmse {det:.2f} px, stabilized rmse {out:.2f} px")
