# VQO Lab Services Package
