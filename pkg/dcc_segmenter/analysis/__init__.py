# Embedding analysis and experiment harnesses
