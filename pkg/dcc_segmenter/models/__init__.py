# Toy encoder, heads and optimizer
