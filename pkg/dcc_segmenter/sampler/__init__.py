# Organ patch sampling and augmentation
