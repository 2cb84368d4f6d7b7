# Tests for rsquant
