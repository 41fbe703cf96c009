# Tests package for the groupoidification engine
