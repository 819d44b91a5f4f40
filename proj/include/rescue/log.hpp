/*
 * Copyright 2026 The rescue-sense Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <mutex>
#include <ostream>
#include <string_view>

#include <json.hpp>

#include "rescue/clock.hpp"

namespace rescue {

/// One JSON object per line. A null stream discards everything.
class JsonLog {
public:
    explicit JsonLog(std::ostream* out = nullptr) : out_(out) {}

    bool enabled() const noexcept { return out_ != nullptr; }

    void write(std::string_view what, const nlohmann::ordered_json& fields = {})
    {
        if (!out_) {
            return;
        }
        nlohmann::ordered_json line;
        line["ts_ms"] = wall_now_ms();
        line["log"] = what;
        if (fields.is_object()) {
            for (const auto& [k, v] : fields.items()) {
                line[k] = v;
            }
        }
        const auto text = line.dump();
        std::lock_guard lock(mutex_);
        *out_ << text << '\n';
        out_->flush();
    }

private:
    std::ostream* out_;
    std::mutex mutex_;
};

}  // namespace rescue
