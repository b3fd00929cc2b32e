#pragma once

#include <array>

// Published Gaussian fits (mu, sigma) of aorta histograms for 12 CTA volumes,
// with the HU range each was reported to accept.
struct BloodTableRow {
    int id;
    int mu;
    int sigma;
    int min;
    int max;
};

inline constexpr std::array<BloodTableRow, 12> kBloodTable{{
    {1, 942, 62, 756, 1128},
    {2, 495, 42, 369, 621},
    {3, 436, 45, 301, 571},
    {4, 485, 38, 371, 599},
    {5, 542, 60, 362, 722},
    {6, 630, 50, 480, 780},
    {7, 663, 53, 504, 822},
    {8, 463, 62, 277, 650},
    {9, 517, 53, 358, 676},
    {10, 543, 55, 378, 708},
    {11, 335, 45, 200, 470},
    {12, 425, 53, 296, 554},
}};
