"""Neural-network equalizers for coherent optical links, with the tooling to
simulate links, train and score equalizers, audit for overestimation and
count inference cost."""

__version__ = "0.1.0"
