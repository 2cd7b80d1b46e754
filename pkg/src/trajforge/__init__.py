"""Mass-optimal low-thrust transfers to Venus orbit.

Indirect shooting with logarithmic-barrier continuation produces one
nominal trajectory; perturbed backward integration of the state/costate
system mass-produces provably optimal trajectories from it; feed-forward
networks learn the policy, the value function, or the value function
with its gradients from the resulting dataset.
"""

__version__ = "0.1.0"
