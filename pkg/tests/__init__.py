# Tests package for umsli
