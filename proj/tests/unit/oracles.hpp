#pragma once

#include <cstddef>
#include <vector>

#include "specrec/ops.hpp"

namespace oracle {

// Direct 7-deep loop cross-correlation, zero padding, double accumulation.
template <typename T>
std::vector<double> conv3d(const specrec::ad::Tensor<T>& x, const specrec::ad::Conv3dParams<T>& p) {
    using specrec::ad::output_extent;
    const auto& s = x.shape();
    const std::size_t N = s[0], C = s[1], D = s[2], H = s[3], W = s[4], O = p.out_channels;
    const auto k = p.kernel, st = p.stride, pd = p.padding;
    const std::size_t OD = output_extent(D, k.d, st.d, pd.d), OH = output_extent(H, k.h, st.h, pd.h),
                      OW = output_extent(W, k.w, st.w, pd.w);
    const auto xv = x.values();
    const auto wv = p.weight.values();
    std::vector<double> out(N * O * OD * OH * OW);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t od = 0; od < OD; ++od)
                for (std::size_t oh = 0; oh < OH; ++oh)
                    for (std::size_t ow = 0; ow < OW; ++ow) {
                        double acc = p.bias ? double(p.bias->values()[o]) : 0.0;
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t a = 0; a < k.d; ++a)
                                for (std::size_t b = 0; b < k.h; ++b)
                                    for (std::size_t e = 0; e < k.w; ++e) {
                                        const long id = long(od * st.d + a) - long(pd.d);
                                        const long ih = long(oh * st.h + b) - long(pd.h);
                                        const long iw = long(ow * st.w + e) - long(pd.w);
                                        if (id < 0 || ih < 0 || iw < 0 || id >= long(D) || ih >= long(H) ||
                                            iw >= long(W))
                                            continue;
                                        acc += double(xv[(((n * C + c) * D + id) * H + ih) * W + iw]) *
                                               double(wv[(((o * C + c) * k.d + a) * k.h + b) * k.w + e]);
                                    }
                        out[(((n * O + o) * OD + od) * OH + oh) * OW + ow] = acc;
                    }
    return out;
}

} // namespace oracle
