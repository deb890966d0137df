# Tensor arithmetic and reverse-mode gradients
