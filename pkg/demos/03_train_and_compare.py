"""
Training on a synthetic benchmark and comparing with simple filters
===================================================================

A reduced benchmark keeps this quick: 8 training and 4 test videos of 120
frames.  The stabilizer parameters are fitted by Nelder-Mead on the
training videos, then every method is scored on the test videos.  Raise
``max_iters`` and use the full default benchmark for real numbers (about
two minutes of training).
"""

from fracstab import BenchmarkConfig, TrainConfig, apply_baseline, evaluate, fit, init_params, make_benchmark
from fracstab import stabilize_many

train, test = make_benchmark(BenchmarkConfig(n_train=8, n_test=4, frames=120), seed=0)
z_train = [v.z for v in train]
p_train = [v.p for v in train]

params0 = init_params(z_train, p_train)
params, history = fit(params0, z_train, p_train, TrainConfig(max_iters=80))
print(f"loss {history[0].total:.2f} -> {history[-1].total:.2f} in {len(history) - 1} iterations")
print(f"learned gamma {params.gamma:.3f}, alpha {params.alpha.round(3)}, beta {params.beta.round(3)}")

z_test = [v.z for v in test]
p_test = [v.p for v in test]
methods = {
    "raw": z_test,
    "moving_average:5": [apply_baseline("moving_average:5", z) for z in z_test],
    "first_order:0.5": [apply_baseline("first_order:0.5", z) for z in z_test],
    "constant_speed:0.5": [apply_baseline("constant_speed:0.5", z) for z in z_test],
    "stabilizer": stabilize_many(params, z_test),
}

print(f"\n{'method':<20}{'nrmse %':>9}{'stability %':>13}{'lag':>7}")
for name, outputs in methods.items():
    report, _ = evaluate(outputs, p_test, method=name)
    print(f"{name:<20}{report.nrmse_percent:9.3f}{report.stability_nrmse_percent:13.3f}{report.lag_frames:7.2f}")
