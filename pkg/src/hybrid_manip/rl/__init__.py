"""Numerical core (dense nets, Adam, Gaussian heads) and the PPO / SAC skill learners."""
