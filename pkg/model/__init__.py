# Anticipation model: attention, context refinement, dual GRU, heads
