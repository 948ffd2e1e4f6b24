# Command line router
