# Contrast-correlation weighted contrastive losses
