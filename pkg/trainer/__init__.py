# Baseline training and robust fine-tuning
