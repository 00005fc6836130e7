"""Case files, fixtures, reports and the command line."""
