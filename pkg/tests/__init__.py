# Initialize your test suite
