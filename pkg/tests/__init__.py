# Tests package for jonesexpand
