# Synthetic multi-phase phantom and dataset I/O
