"""
Initializing the inner iteration
================================

The primal-dual inner loop needs a starting dual variable.  Starting from
zero costs many iterations in the first time step.  A flux taken from the
subdifferential of the initial datum is already nearly optimal.  Here the
datum is the indicator of [-1, 1] on (-2, 2) with zero flux boundary
conditions, on a coarse mesh so the script runs in seconds.
"""

from tvflow.experiments import inner_iters_experiment

report = inner_iters_experiment({"h": 2.0 ** -4})
print("first step, zero dual           :", report.first_step_zero, "iterations")
print("first step, subdifferential dual:", report.first_step_subdiff, "iterations")
print("ratio:", round(report.ratio, 2))

# Later steps are warm started from the previous dual and need few
# iterations, until the solution becomes flat.  That step needs many more.
iters = report.traces["subdiff"].inner_iters
print("iterations per step:", iters[1:].tolist())
print("flat at step", report.flat_step, "; steps with a spike:", report.spikes_subdiff)
