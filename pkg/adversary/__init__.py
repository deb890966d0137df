# Worst-case perturbation search
