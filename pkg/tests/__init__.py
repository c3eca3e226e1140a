# Test suite for fusionsched
