#include "cabcnn/layers.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace cabcnn {

namespace {

double xavier_limit(std::int64_t fan_in, std::int64_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

Conv1D::Conv1D(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k)
    : in_channels(in_ch), out_channels(out_ch), kernel(k) {
    if (in_ch <= 0 || out_ch <= 0 || k <= 0) {
        throw ConfigError("Conv1D needs positive channels and kernel size");
    }
    weight = Tensor({out_ch, in_ch, k});
    bias = Tensor({out_ch});
}

void Conv1D::init(Rng& rng) {
    const double s = xavier_limit(in_channels * kernel, out_channels * kernel);
    for (double& w : weight.data) {
        w = rng.uniform(-s, s);
    }
    bias.fill(0.0);
}

Tensor Conv1D::forward(const Tensor& x, Ctx* ctx) const {
    if (x.rank() != 2 || x.shape[0] != in_channels) {
        throw ShapeError("Conv1D: expected input [" + std::to_string(in_channels) +
                         ",L], got " + shape_str(x.shape));
    }
    const std::int64_t len = x.shape[1];
    const std::int64_t pad_left = (kernel - 1) / 2;
    Tensor y({out_channels, len});
    for (std::int64_t o = 0; o < out_channels; ++o) {
        const double b = bias.at(o);
        for (std::int64_t t = 0; t < len; ++t) {
            double acc = b;
            for (std::int64_t c = 0; c < in_channels; ++c) {
                for (std::int64_t k = 0; k < kernel; ++k) {
                    const std::int64_t pos = t + k - pad_left;
                    if (pos >= 0 && pos < len) {
                        acc += weight.at(o, c, k) * x.at(c, pos);
                    }
                }
            }
            y.at(o, t) = acc;
        }
    }
    if (ctx) {
        ctx->input = x;
    }
    return y;
}

Tensor Conv1D::backward(const Ctx& ctx, const Tensor& gy) {
    const Tensor& x = ctx.input;
    const std::int64_t len = x.shape[1];
    check_shape(gy, {out_channels, len}, "Conv1D backward grad");
    const std::int64_t pad_left = (kernel - 1) / 2;
    Tensor gx({in_channels, len});
    for (std::int64_t o = 0; o < out_channels; ++o) {
        for (std::int64_t t = 0; t < len; ++t) {
            const double g = gy.at(o, t);
            if (g == 0.0) {
                continue;
            }
            bias.grad_at(o) += g;
            for (std::int64_t c = 0; c < in_channels; ++c) {
                for (std::int64_t k = 0; k < kernel; ++k) {
                    const std::int64_t pos = t + k - pad_left;
                    if (pos >= 0 && pos < len) {
                        weight.grad_at(o, c, k) += g * x.at(c, pos);
                        gx.at(c, pos) += g * weight.at(o, c, k);
                    }
                }
            }
        }
    }
    return gx;
}

std::int64_t MaxPool1D::out_len(std::int64_t in_len, std::int64_t stride) {
    return (in_len + stride - 1) / stride;
}

Tensor MaxPool1D::forward(const Tensor& x, Ctx* ctx) const {
    if (x.rank() != 2) {
        throw ShapeError("MaxPool1D: expected [C,L], got " + shape_str(x.shape));
    }
    const std::int64_t channels = x.shape[0];
    const std::int64_t len = x.shape[1];
    const std::int64_t out = out_len(len, stride);
    const std::int64_t total_pad = std::max<std::int64_t>(0, (out - 1) * stride + size - len);
    const std::int64_t pad_left = total_pad / 2;
    Tensor y({channels, out});
    if (ctx) {
        ctx->argmax.assign(static_cast<std::size_t>(channels * out), -1);
        ctx->channels = channels;
        ctx->in_len = len;
    }
    for (std::int64_t c = 0; c < channels; ++c) {
        for (std::int64_t s = 0; s < out; ++s) {
            const std::int64_t start = s * stride - pad_left;
            double best = -std::numeric_limits<double>::infinity();
            std::int64_t best_pos = -1;
            for (std::int64_t k = 0; k < size; ++k) {
                const std::int64_t pos = start + k;
                if (pos < 0 || pos >= len) {
                    continue;
                }
                const double v = x.at(c, pos);
                if (v > best) {
                    best = v;
                    best_pos = pos;
                }
            }
            y.at(c, s) = best;
            if (ctx) {
                ctx->argmax[static_cast<std::size_t>(c * out + s)] = best_pos;
            }
        }
    }
    return y;
}

Tensor MaxPool1D::backward(const Ctx& ctx, const Tensor& gy) const {
    const std::int64_t out = gy.shape[1];
    check_shape(gy, {ctx.channels, out}, "MaxPool1D backward grad");
    Tensor gx({ctx.channels, ctx.in_len});
    for (std::int64_t c = 0; c < ctx.channels; ++c) {
        for (std::int64_t s = 0; s < out; ++s) {
            const std::int64_t pos = ctx.argmax[static_cast<std::size_t>(c * out + s)];
            if (pos >= 0) {
                gx.at(c, pos) += gy.at(c, s);
            }
        }
    }
    return gx;
}

BatchNorm1D::BatchNorm1D(std::int64_t c, double mom, double eps)
    : channels(c), momentum(mom), epsilon(eps) {
    if (c <= 0) {
        throw ConfigError("BatchNorm1D needs positive channel count");
    }
    if (eps <= 0.0) {
        throw ConfigError("BatchNorm1D epsilon must be positive");
    }
    gamma = Tensor({c});
    beta = Tensor({c});
    running_mean = Tensor({c});
    running_var = Tensor({c});
    gamma.fill(1.0);
    beta.fill(0.0);
    running_mean.fill(0.0);
    running_var.fill(1.0);
}

Tensor BatchNorm1D::forward(const Tensor& x, Ctx* ctx, bool training) {
    if (x.rank() != 3 || x.shape[1] != channels) {
        throw ShapeError("BatchNorm1D: expected [B," + std::to_string(channels) + ",L], got " +
                         shape_str(x.shape));
    }
    const std::int64_t batch = x.shape[0];
    const std::int64_t len = x.shape[2];
    const std::int64_t count = batch * len;
    if (training && count < 2) {
        throw ShapeError("BatchNorm1D: train mode needs at least 2 values per channel, got " +
                         std::to_string(count));
    }
    Tensor y(x.shape);
    if (ctx) {
        ctx->xhat = Tensor(x.shape);
        ctx->inv_std.assign(static_cast<std::size_t>(channels), 0.0);
        ctx->training = training;
    }
    for (std::int64_t c = 0; c < channels; ++c) {
        double mean;
        double var;
        if (training) {
            mean = 0.0;
            for (std::int64_t b = 0; b < batch; ++b) {
                for (std::int64_t t = 0; t < len; ++t) {
                    mean += x.at(b, c, t);
                }
            }
            mean /= static_cast<double>(count);
            var = 0.0;
            for (std::int64_t b = 0; b < batch; ++b) {
                for (std::int64_t t = 0; t < len; ++t) {
                    const double d = x.at(b, c, t) - mean;
                    var += d * d;
                }
            }
            var /= static_cast<double>(count);
            running_mean.at(c) = momentum * running_mean.at(c) + (1.0 - momentum) * mean;
            running_var.at(c) = momentum * running_var.at(c) + (1.0 - momentum) * var;
        } else {
            mean = running_mean.at(c);
            var = running_var.at(c);
        }
        const double inv_std = 1.0 / std::sqrt(var + epsilon);
        const double g = gamma.at(c);
        const double be = beta.at(c);
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t t = 0; t < len; ++t) {
                const double xhat = (x.at(b, c, t) - mean) * inv_std;
                y.at(b, c, t) = g * xhat + be;
                if (ctx) {
                    ctx->xhat.at(b, c, t) = xhat;
                }
            }
        }
        if (ctx) {
            ctx->inv_std[static_cast<std::size_t>(c)] = inv_std;
        }
    }
    return y;
}

Tensor BatchNorm1D::backward(const Ctx& ctx, const Tensor& gy) {
    check_shape(gy, ctx.xhat.shape, "BatchNorm1D backward grad");
    const std::int64_t batch = gy.shape[0];
    const std::int64_t len = gy.shape[2];
    const double count = static_cast<double>(batch * len);
    Tensor gx(gy.shape);
    for (std::int64_t c = 0; c < channels; ++c) {
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (std::int64_t b = 0; b < batch; ++b) {
            for (std::int64_t t = 0; t < len; ++t) {
                const double g = gy.at(b, c, t);
                sum_g += g;
                sum_gx += g * ctx.xhat.at(b, c, t);
            }
        }
        gamma.grad_at(c) += sum_gx;
        beta.grad_at(c) += sum_g;
        const double gam = gamma.at(c);
        const double inv_std = ctx.inv_std[static_cast<std::size_t>(c)];
        if (ctx.training) {
            // Batch statistics depend on x, so the mean/variance paths
            // feed back into every position.
            for (std::int64_t b = 0; b < batch; ++b) {
                for (std::int64_t t = 0; t < len; ++t) {
                    const double g = gy.at(b, c, t);
                    gx.at(b, c, t) = gam * inv_std / count *
                                     (count * g - sum_g - ctx.xhat.at(b, c, t) * sum_gx);
                }
            }
        } else {
            for (std::int64_t b = 0; b < batch; ++b) {
                for (std::int64_t t = 0; t < len; ++t) {
                    gx.at(b, c, t) = gam * inv_std * gy.at(b, c, t);
                }
            }
        }
    }
    return gx;
}

Dense::Dense(std::int64_t in, std::int64_t out) : in_dim(in), out_dim(out) {
    if (in <= 0 || out <= 0) {
        throw ConfigError("Dense needs positive dimensions");
    }
    weight = Tensor({out, in});
    bias = Tensor({out});
}

void Dense::init(Rng& rng) {
    const double s = xavier_limit(in_dim, out_dim);
    for (double& w : weight.data) {
        w = rng.uniform(-s, s);
    }
    bias.fill(0.0);
}

Tensor Dense::forward(const Tensor& x, Ctx* ctx) const {
    check_shape(x, {in_dim}, "Dense input");
    Tensor y({out_dim});
    for (std::int64_t o = 0; o < out_dim; ++o) {
        double acc = bias.at(o);
        for (std::int64_t i = 0; i < in_dim; ++i) {
            acc += weight.at(o, i) * x.at(i);
        }
        y.at(o) = acc;
    }
    if (ctx) {
        ctx->input = x;
    }
    return y;
}

Tensor Dense::backward(const Ctx& ctx, const Tensor& gy) {
    check_shape(gy, {out_dim}, "Dense backward grad");
    Tensor gx({in_dim});
    for (std::int64_t o = 0; o < out_dim; ++o) {
        const double g = gy.at(o);
        bias.grad_at(o) += g;
        if (g == 0.0) {
            continue;
        }
        for (std::int64_t i = 0; i < in_dim; ++i) {
            weight.grad_at(o, i) += g * ctx.input.at(i);
            gx.at(i) += g * weight.at(o, i);
        }
    }
    return gx;
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) {
        v = v > 0.0 ? v : 0.0;
    }
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& gy) {
    check_shape(gy, x.shape, "relu backward grad");
    Tensor gx(x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        gx.data[i] = x.data[i] > 0.0 ? gy.data[i] : 0.0;
    }
    return gx;
}

Tensor dropout_forward(const Tensor& x, double rate, bool training, std::uint64_t seed,
                       std::vector<unsigned char>* keep_out) {
    if (rate < 0.0 || rate >= 1.0) {
        throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        if (keep_out) {
            keep_out->assign(x.data.size(), 1);
        }
        return x;
    }
    Rng rng(seed);
    const double scale = 1.0 / (1.0 - rate);
    Tensor y(x.shape);
    if (keep_out) {
        keep_out->assign(x.data.size(), 0);
    }
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        const bool keep = rng.uniform() >= rate;
        if (keep) {
            y.data[i] = x.data[i] * scale;
            if (keep_out) {
                (*keep_out)[i] = 1;
            }
        }
    }
    return y;
}

Tensor dropout_backward(const std::vector<unsigned char>& keep, double rate, const Tensor& gy) {
    if (keep.size() != gy.data.size()) {
        throw ShapeError("dropout backward mask size mismatch");
    }
    const double scale = 1.0 / (1.0 - rate);
    Tensor gx(gy.shape);
    for (std::size_t i = 0; i < gy.data.size(); ++i) {
        gx.data[i] = keep[i] ? gy.data[i] * scale : 0.0;
    }
    return gx;
}

}  // namespace cabcnn
