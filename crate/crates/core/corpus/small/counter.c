// Saturating event counter drained by the main loop.
uint8 TOIE0 @ 0x6E.0;
volatile uint8 events;
uint8 total;

ISR(TIMER0_OVF_vect) {
    if (events < 3) {
        events = events + 1;
    }
}

void main() {
    uint8 n;
    TOIE0 = 1;
    while (1) {
        cli();
        n = events;
        events = 0;
        sei();
        if (total < 5) {
            total = total + n;
        }
    }
}
