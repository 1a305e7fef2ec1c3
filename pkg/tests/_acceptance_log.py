# (criterion, passed, detail) lines collected by the acceptance suite
RESULTS = []
