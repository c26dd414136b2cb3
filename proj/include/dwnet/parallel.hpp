/* Copyright 2026 The dwnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstddef>
#include <functional>

namespace dwnet {

// Worker cap. Defaults to the hardware concurrency, lowered by DWNET_THREADS.
int thread_count();
void set_thread_count(int n);

// Runs fn(begin, end) over a static partition of [0, n). Each index is owned by
// exactly one worker, so results do not depend on scheduling. Falls back to a
// single call when the cap is 1 or the job is smaller than min_chunk.
void parallel_for(std::size_t n, std::size_t min_chunk,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace dwnet
