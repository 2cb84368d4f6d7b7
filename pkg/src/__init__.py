# rsquant - optimal quantization and distortion mismatch laboratory
