# DCC Segmenter
