# Task and robustness objectives
